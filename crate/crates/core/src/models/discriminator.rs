use candle_core::{Module, Tensor};
use candle_nn::Conv2d;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv2d, instance_norm, leaky_relu, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorNorm {
    Instance,
    /// No normalisation anywhere; keeps every logit strictly local, which the
    /// receptive-field probes rely on.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    /// Total conv layers: `n_layers - 2` stride-2 convs, one stride-1 conv, one logit conv.
    pub n_layers: usize,
    pub base_width: usize,
    pub norm: DiscriminatorNorm,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            n_layers: 5,
            base_width: 64,
            norm: DiscriminatorNorm::Instance,
        }
    }
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 3 || self.base_width == 0 {
            return Err(Error::Config(
                "discriminator needs n_layers >= 3 and a positive width".into(),
            ));
        }
        Ok(())
    }

    /// Side of the logit grid for a square input, if the input is large enough.
    pub fn output_size(&self, input: usize) -> Option<usize> {
        let mut s = input;
        for _ in 0..self.n_layers - 2 {
            // k4 s2 p1
            s /= 2;
        }
        // two k4 s1 p1 convs each shrink by one
        s.checked_sub(2).filter(|&s| s > 0)
    }

    /// Receptive field (in input pixels) of one output logit.
    pub fn receptive_field(&self) -> usize {
        let mut rf = 1;
        rf += 3; // final k4 s1
        rf += 3; // k4 s1
        for _ in 0..self.n_layers - 2 {
            rf = (rf - 1) * 2 + 4;
        }
        rf
    }

    /// Inclusive input-pixel range covered by output index `o` along one axis.
    pub fn receptive_range(&self, o: usize) -> (i64, i64) {
        let (mut lo, mut hi) = (o as i64, o as i64);
        for _ in 0..2 {
            lo -= 1;
            hi += 2;
        }
        for _ in 0..self.n_layers - 2 {
            lo = lo * 2 - 1;
            hi = hi * 2 - 1 + 3;
        }
        (lo, hi)
    }
}

/// PatchGAN discriminator emitting raw per-patch logits `[B, 1, h, w]`.
#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    spec: DiscriminatorSpec,
    convs: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(ps: &ParamStore, spec: DiscriminatorSpec) -> Result<Self> {
        spec.validate()?;
        let mut convs = Vec::with_capacity(spec.n_layers);
        let mut c_in = 3;
        let mut c_out = spec.base_width;
        let n_strided = spec.n_layers - 2;
        for i in 0..n_strided {
            convs.push(conv2d(&ps.pp(format!("conv.{i}")), c_in, c_out, 4, 2, 1)?);
            c_in = c_out;
            c_out = spec.base_width * (2usize << i).min(8);
        }
        convs.push(conv2d(
            &ps.pp(format!("conv.{n_strided}")),
            c_in,
            c_out,
            4,
            1,
            1,
        )?);
        convs.push(conv2d(
            &ps.pp(format!("conv.{}", n_strided + 1)),
            c_out,
            1,
            4,
            1,
            1,
        )?);
        Ok(Self { spec, convs })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = images.dims4()?;
        if c != 3 || h != w || self.spec.output_size(h).is_none() {
            return Err(Error::Shape(format!(
                "discriminator expects [B, 3, S, S] with S large enough for {} layers, got {:?}",
                self.spec.n_layers,
                images.dims()
            )));
        }
        let last = self.convs.len() - 1;
        let mut x = images.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(&x)?;
            if i == last {
                break;
            }
            if i > 0 && self.spec.norm == DiscriminatorNorm::Instance {
                x = instance_norm(&x)?;
            }
            x = leaky_relu(&x)?;
        }
        Ok(x)
    }

    /// Whole-image score: mean of the patch logits, `[B]`.
    pub fn score(&self, images: &Tensor) -> Result<Tensor> {
        let logits = self.forward(images)?;
        let b = logits.dim(0)?;
        Ok(logits.reshape((b, ()))?.mean(1)?)
    }
}
