use candle_core::{Module, Tensor, D};
use candle_nn::{Conv2d, Linear};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv2d, leaky_relu, linear, LayerNorm2d, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    SimpleCnn,
    HrnetSmall,
}

impl std::str::FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple_cnn" => Ok(Backbone::SimpleCnn),
            "hrnet_small" => Ok(Backbone::HrnetSmall),
            other => Err(Error::Config(format!(
                "unknown classifier backbone `{other}` (expected simple_cnn or hrnet_small)"
            ))),
        }
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backbone::SimpleCnn => "simple_cnn",
            Backbone::HrnetSmall => "hrnet_small",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub backbone: Backbone,
    pub n_classes: usize,
    pub base_width: usize,
}

#[derive(Debug, Clone)]
struct SimpleCnn {
    convs: Vec<Conv2d>,
}

impl SimpleCnn {
    const WIDTHS: [usize; 6] = [1, 2, 2, 4, 4, 8];
    const STRIDES: [usize; 6] = [1, 2, 2, 2, 2, 2];

    fn new(ps: &ParamStore, w: usize) -> Result<Self> {
        let mut c_in = 3;
        let mut convs = Vec::new();
        for (i, (m, s)) in Self::WIDTHS.iter().zip(Self::STRIDES).enumerate() {
            convs.push(conv2d(&ps.pp(format!("conv.{i}")), c_in, w * m, 3, s, 1)?);
            c_in = w * m;
        }
        Ok(Self { convs })
    }

    fn feature_dim(w: usize) -> usize {
        w * Self::WIDTHS[5]
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let mut h = xs.clone();
        for conv in &self.convs {
            h = leaky_relu(&conv.forward(&h)?)?;
        }
        Ok(h.mean(D::Minus1)?.mean(D::Minus1)?)
    }
}

/// conv3 -> norm -> act, the unit every HRNet-style path is built from.
#[derive(Debug, Clone)]
struct ConvNorm {
    conv: Conv2d,
    norm: LayerNorm2d,
}

impl ConvNorm {
    fn new(ps: &ParamStore, c_in: usize, c_out: usize, k: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv: conv2d(&ps.pp("conv"), c_in, c_out, k, stride, k / 2)?,
            norm: LayerNorm2d::new(&ps.pp("norm"), c_out)?,
        })
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        self.norm.forward(&self.conv.forward(xs)?)
    }
}

#[derive(Debug, Clone)]
struct BasicBlock {
    a: ConvNorm,
    b: ConvNorm,
}

impl BasicBlock {
    fn new(ps: &ParamStore, c: usize) -> Result<Self> {
        Ok(Self {
            a: ConvNorm::new(&ps.pp("a"), c, c, 3, 1)?,
            b: ConvNorm::new(&ps.pp("b"), c, c, 3, 1)?,
        })
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let h = self.a.forward(xs)?.relu()?;
        let h = self.b.forward(&h)?;
        Ok((xs + h)?.relu()?)
    }
}

/// Compact high-resolution network: three parallel resolution branches
/// (1/4, 1/8, 1/16) with repeated cross-branch fusion.
#[derive(Debug, Clone)]
struct HrnetSmall {
    stem: [ConvNorm; 2],
    to_b1: ConvNorm,
    stage2: [BasicBlock; 2],
    fuse2_up: ConvNorm,
    fuse2_down: ConvNorm,
    to_b2: ConvNorm,
    stage3: [BasicBlock; 3],
    // fuse3_in[to][from]
    fuse3: Vec<(usize, usize, Vec<ConvNorm>)>,
    heads: [ConvNorm; 3],
}

impl HrnetSmall {
    fn new(ps: &ParamStore, w: usize) -> Result<Self> {
        let widths = [w, 2 * w, 4 * w];
        let stem = [
            ConvNorm::new(&ps.pp("stem.0"), 3, w, 3, 2)?,
            ConvNorm::new(&ps.pp("stem.1"), w, w, 3, 2)?,
        ];
        let to_b1 = ConvNorm::new(&ps.pp("transition1"), w, widths[1], 3, 2)?;
        let stage2 = [
            BasicBlock::new(&ps.pp("stage2.b0"), widths[0])?,
            BasicBlock::new(&ps.pp("stage2.b1"), widths[1])?,
        ];
        let fuse2_up = ConvNorm::new(&ps.pp("fuse2.up"), widths[1], widths[0], 1, 1)?;
        let fuse2_down = ConvNorm::new(&ps.pp("fuse2.down"), widths[0], widths[1], 3, 2)?;
        let to_b2 = ConvNorm::new(&ps.pp("transition2"), widths[1], widths[2], 3, 2)?;
        let stage3 = [
            BasicBlock::new(&ps.pp("stage3.b0"), widths[0])?,
            BasicBlock::new(&ps.pp("stage3.b1"), widths[1])?,
            BasicBlock::new(&ps.pp("stage3.b2"), widths[2])?,
        ];
        let mut fuse3 = Vec::new();
        for to in 0..3 {
            for from in 0..3 {
                if to == from {
                    continue;
                }
                let ps = ps.pp(format!("fuse3.{from}to{to}"));
                let path = if from > to {
                    vec![ConvNorm::new(&ps, widths[from], widths[to], 1, 1)?]
                } else {
                    // one stride-2 conv per halving; width changes on the last
                    (from..to)
                        .map(|k| {
                            let c_out = if k + 1 == to {
                                widths[to]
                            } else {
                                widths[from]
                            };
                            ConvNorm::new(&ps.pp(format!("{k}")), widths[from], c_out, 3, 2)
                        })
                        .collect::<Result<Vec<_>>>()?
                };
                fuse3.push((to, from, path));
            }
        }
        let heads = [
            ConvNorm::new(&ps.pp("head.0"), widths[0], widths[0], 1, 1)?,
            ConvNorm::new(&ps.pp("head.1"), widths[1], widths[1], 1, 1)?,
            ConvNorm::new(&ps.pp("head.2"), widths[2], widths[2], 1, 1)?,
        ];
        Ok(Self {
            stem,
            to_b1,
            stage2,
            fuse2_up,
            fuse2_down,
            to_b2,
            stage3,
            fuse3,
            heads,
        })
    }

    fn feature_dim(w: usize) -> usize {
        7 * w
    }

    fn resize_to(xs: &Tensor, like: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = like.dims4()?;
        let (_, _, xh, xw) = xs.dims4()?;
        if (xh, xw) == (h, w) {
            Ok(xs.clone())
        } else {
            Ok(xs.upsample_nearest2d(h, w)?)
        }
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let mut h = xs.clone();
        for unit in &self.stem {
            h = unit.forward(&h)?.relu()?;
        }
        let b0 = h;
        let b1 = self.to_b1.forward(&b0)?.relu()?;
        let b0 = self.stage2[0].forward(&b0)?;
        let b1 = self.stage2[1].forward(&b1)?;
        let up = Self::resize_to(&self.fuse2_up.forward(&b1)?, &b0)?;
        let down = self.fuse2_down.forward(&b0)?;
        let down = Self::resize_to(&down, &b1)?;
        let b0 = (&b0 + up)?.relu()?;
        let b1 = (&b1 + down)?.relu()?;
        let b2 = self.to_b2.forward(&b1)?.relu()?;
        let branches = [
            self.stage3[0].forward(&b0)?,
            self.stage3[1].forward(&b1)?,
            self.stage3[2].forward(&b2)?,
        ];
        let mut fused = branches.clone();
        for (to, from, path) in &self.fuse3 {
            let mut t = branches[*from].clone();
            for (k, unit) in path.iter().enumerate() {
                t = unit.forward(&t)?;
                if k + 1 < path.len() {
                    t = t.relu()?;
                }
            }
            let t = Self::resize_to(&t, &branches[*to])?;
            fused[*to] = (&fused[*to] + t)?;
        }
        let mut pooled = Vec::with_capacity(3);
        for (branch, head) in fused.iter().zip(&self.heads) {
            let f = head.forward(&branch.relu()?)?.relu()?;
            pooled.push(f.mean(D::Minus1)?.mean(D::Minus1)?);
        }
        Ok(Tensor::cat(&pooled, 1)?)
    }
}

#[derive(Debug, Clone)]
enum Body {
    Simple(SimpleCnn),
    Hrnet(HrnetSmall),
}

/// Photo classifier: backbone features, then a fully-connected logit layer.
#[derive(Debug, Clone)]
pub struct Classifier {
    spec: ClassifierSpec,
    body: Body,
    fc: Linear,
}

impl Classifier {
    pub fn new(ps: &ParamStore, spec: ClassifierSpec) -> Result<Self> {
        if spec.n_classes == 0 || spec.base_width == 0 {
            return Err(Error::Config(
                "classifier needs at least one class and a positive width".into(),
            ));
        }
        let (body, dim) = match spec.backbone {
            Backbone::SimpleCnn => (
                Body::Simple(SimpleCnn::new(&ps.pp("body"), spec.base_width)?),
                SimpleCnn::feature_dim(spec.base_width),
            ),
            Backbone::HrnetSmall => (
                Body::Hrnet(HrnetSmall::new(&ps.pp("body"), spec.base_width)?),
                HrnetSmall::feature_dim(spec.base_width),
            ),
        };
        let fc = linear(&ps.pp("fc"), dim, spec.n_classes)?;
        Ok(Self { spec, body, fc })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn feature_dim(&self) -> usize {
        match self.spec.backbone {
            Backbone::SimpleCnn => SimpleCnn::feature_dim(self.spec.base_width),
            Backbone::HrnetSmall => HrnetSmall::feature_dim(self.spec.base_width),
        }
    }

    /// Pooled penultimate features `[B, feature_dim]`.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = images.dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!(
                "classifier expects 3-channel images, got {:?}",
                images.dims()
            )));
        }
        match &self.body {
            Body::Simple(b) => b.forward(images),
            Body::Hrnet(b) => b.forward(images),
        }
    }

    /// Raw class logits `[B, n_classes]`.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.fc.forward(&self.features(images)?)?)
    }
}
