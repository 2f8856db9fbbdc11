use candle_core::{Module, Tensor};
use candle_nn::{Conv2d, ConvTranspose2d, Embedding, Linear};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adain, conv2d, conv_transpose2d_x2, embedding, instance_norm, linear, linear_with,
    reflection_pad2d, subpixel_upsample, Init, ParamStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    None,
    Adain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampling {
    Transposed,
    Subpixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub input_channels: usize,
    pub base_width: usize,
    pub n_residual_blocks: usize,
    pub n_down: usize,
    pub n_up: usize,
    pub conditioning: Conditioning,
    pub upsampling: Upsampling,
    /// Width of the label embedding and of the conditioning MLP.
    pub embed_dim: usize,
}

impl GeneratorSpec {
    /// Photo-to-sketch generator: instance norm and transposed-conv upsampling.
    pub fn photo_to_sketch(base_width: usize, n_residual_blocks: usize) -> Self {
        Self {
            input_channels: 3,
            base_width,
            n_residual_blocks,
            n_down: 2,
            n_up: 2,
            conditioning: Conditioning::None,
            upsampling: Upsampling::Transposed,
            embed_dim: 0,
        }
    }

    /// Label-conditioned sketch-to-photo generator: AdaIN residual blocks and
    /// sub-pixel upsampling.
    pub fn sketch_to_photo(base_width: usize, n_residual_blocks: usize, embed_dim: usize) -> Self {
        Self {
            input_channels: 3,
            base_width,
            n_residual_blocks,
            n_down: 2,
            n_up: 2,
            conditioning: Conditioning::Adain,
            upsampling: Upsampling::Subpixel,
            embed_dim,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.n_down != self.n_up {
            return Err(Error::Config(format!(
                "generator needs n_down == n_up, got {} and {}",
                self.n_down, self.n_up
            )));
        }
        if self.base_width == 0 || self.input_channels == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        if self.conditioning == Conditioning::Adain && (n_classes == 0 || self.embed_dim == 0) {
            return Err(Error::Config(
                "AdaIN conditioning needs a non-empty vocabulary and embed_dim > 0".into(),
            ));
        }
        Ok(())
    }

    /// Channel width of the residual trunk.
    pub fn trunk_width(&self) -> usize {
        self.base_width << self.n_down
    }

    /// Number of AdaIN-normalised layers (two per residual block).
    pub fn n_adain_sites(&self) -> usize {
        match self.conditioning {
            Conditioning::Adain => 2 * self.n_residual_blocks,
            Conditioning::None => 0,
        }
    }
}

/// Maps a class label to one `(scale, shift)` pair per channel per AdaIN site.
///
/// label -> embedding -> 2-layer MLP -> per-site linear heads. The heads start
/// with zero weights, scale bias 1 and shift bias 0, so an untrained
/// conditional generator behaves like an instance-normalised one.
#[derive(Debug, Clone)]
pub struct LabelEmbedding {
    n_classes: usize,
    table: Embedding,
    mlp: [Linear; 2],
    heads: Vec<(Linear, Linear)>,
}

impl LabelEmbedding {
    pub fn new(
        ps: &ParamStore,
        n_classes: usize,
        embed_dim: usize,
        channels: usize,
        n_sites: usize,
    ) -> Result<Self> {
        let table = embedding(&ps.pp("table"), n_classes, embed_dim)?;
        let mlp = [
            linear(&ps.pp("mlp.0"), embed_dim, embed_dim)?,
            linear(&ps.pp("mlp.1"), embed_dim, embed_dim)?,
        ];
        let heads = (0..n_sites)
            .map(|i| {
                let scale = linear_with(
                    &ps.pp(format!("heads.{i}.scale")),
                    embed_dim,
                    channels,
                    Init::ZEROS,
                    Init::Const(1.0),
                )?;
                let shift = linear_with(
                    &ps.pp(format!("heads.{i}.shift")),
                    embed_dim,
                    channels,
                    Init::ZEROS,
                    Init::ZEROS,
                )?;
                Ok((scale, shift))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_classes,
            table,
            mlp,
            heads,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn forward(&self, labels: &Tensor) -> Result<Vec<(Tensor, Tensor)>> {
        let values: Vec<u32> = labels.to_vec1()?;
        if let Some(bad) = values.iter().find(|&&l| l as usize >= self.n_classes) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        let mut h = self.table.forward(labels)?;
        for layer in &self.mlp {
            h = layer.forward(&h)?.relu()?;
        }
        self.heads
            .iter()
            .map(|(scale, shift)| Ok((scale.forward(&h)?, shift.forward(&h)?)))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct ResidualBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResidualBlock {
    fn new(ps: &ParamStore, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: conv2d(&ps.pp("conv1"), channels, channels, 3, 1, 0)?,
            conv2: conv2d(&ps.pp("conv2"), channels, channels, 3, 1, 0)?,
        })
    }

    fn forward(&self, xs: &Tensor, affine: Option<[&(Tensor, Tensor); 2]>) -> Result<Tensor> {
        let norm = |t: &Tensor, i: usize| -> Result<Tensor> {
            match affine {
                Some(pairs) => adain(t, &pairs[i].0, &pairs[i].1),
                None => instance_norm(t),
            }
        };
        let h = self.conv1.forward(&reflection_pad2d(xs, 1)?)?;
        let h = norm(&h, 0)?.relu()?;
        let h = self.conv2.forward(&reflection_pad2d(&h, 1)?)?;
        let h = norm(&h, 1)?;
        Ok((xs + h)?)
    }
}

#[derive(Debug, Clone)]
enum UpLayer {
    Transposed(ConvTranspose2d),
    Subpixel(Conv2d),
}

impl UpLayer {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        match self {
            UpLayer::Transposed(conv) => Ok(conv.forward(xs)?),
            UpLayer::Subpixel(conv) => subpixel_upsample(&conv.forward(xs)?, 2),
        }
    }
}

/// Encoder / residual trunk / decoder image generator with tanh output.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    stem: Conv2d,
    down: Vec<Conv2d>,
    blocks: Vec<ResidualBlock>,
    up: Vec<UpLayer>,
    head: Conv2d,
    label: Option<LabelEmbedding>,
}

impl Generator {
    pub fn new(ps: &ParamStore, spec: GeneratorSpec, n_classes: usize) -> Result<Self> {
        spec.validate(n_classes)?;
        let w = spec.base_width;
        let stem = conv2d(&ps.pp("stem"), spec.input_channels, w, 7, 1, 0)?;
        let down = (0..spec.n_down)
            .map(|i| conv2d(&ps.pp(format!("down.{i}")), w << i, w << (i + 1), 3, 2, 1))
            .collect::<Result<Vec<_>>>()?;
        let trunk = spec.trunk_width();
        let blocks = (0..spec.n_residual_blocks)
            .map(|i| ResidualBlock::new(&ps.pp(format!("blocks.{i}")), trunk))
            .collect::<Result<Vec<_>>>()?;
        let up = (0..spec.n_up)
            .map(|i| {
                let c_in = trunk >> i;
                let c_out = trunk >> (i + 1);
                let ps = ps.pp(format!("up.{i}"));
                Ok(match spec.upsampling {
                    Upsampling::Transposed => {
                        UpLayer::Transposed(conv_transpose2d_x2(&ps, c_in, c_out)?)
                    }
                    Upsampling::Subpixel => {
                        UpLayer::Subpixel(conv2d(&ps, c_in, c_out * 4, 3, 1, 1)?)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head = conv2d(&ps.pp("head"), w, 3, 7, 1, 0)?;
        let label = match spec.conditioning {
            Conditioning::Adain => Some(LabelEmbedding::new(
                &ps.pp("label"),
                n_classes,
                spec.embed_dim,
                trunk,
                spec.n_adain_sites(),
            )?),
            Conditioning::None => None,
        };
        Ok(Self {
            spec,
            stem,
            down,
            blocks,
            up,
            head,
            label,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn label_embedding(&self) -> Option<&LabelEmbedding> {
        self.label.as_ref()
    }

    fn check_input(&self, xs: &Tensor) -> Result<()> {
        let dims = xs.dims();
        let factor = 1usize << self.spec.n_down;
        match dims {
            [_, c, h, w]
                if *c == self.spec.input_channels && h == w && *h > 0 && h % factor == 0 =>
            {
                Ok(())
            }
            _ => Err(Error::Shape(format!(
                "generator expects [B, {}, S, S] with S divisible by {factor}, got {dims:?}",
                self.spec.input_channels
            ))),
        }
    }

    pub fn forward(&self, xs: &Tensor, labels: Option<&Tensor>) -> Result<Tensor> {
        self.check_input(xs)?;
        let affine = match (&self.label, labels) {
            (Some(emb), Some(labels)) => {
                if labels.dims() != [xs.dim(0)?] {
                    return Err(Error::Shape(format!(
                        "expected {} labels, got shape {:?}",
                        xs.dim(0)?,
                        labels.dims()
                    )));
                }
                Some(emb.forward(labels)?)
            }
            (Some(_), None) => {
                return Err(Error::Argument("conditional generator needs labels".into()))
            }
            (None, _) => None,
        };
        let mut h = self.stem.forward(&reflection_pad2d(xs, 3)?)?;
        h = instance_norm(&h)?.relu()?;
        for conv in &self.down {
            h = instance_norm(&conv.forward(&h)?)?.relu()?;
        }
        for (i, block) in self.blocks.iter().enumerate() {
            let pairs = affine.as_ref().map(|a| [&a[2 * i], &a[2 * i + 1]]);
            h = block.forward(&h, pairs)?;
        }
        for up in &self.up {
            h = instance_norm(&up.forward(&h)?)?.relu()?;
        }
        let out = self.head.forward(&reflection_pad2d(&h, 3)?)?;
        Ok(out.tanh()?)
    }

    /// `G_s`: photo -> sketch. The output is projected to grey replicated over
    /// three channels, the same form dataset sketches are loaded in.
    pub fn photo_to_sketch(&self, photos: &Tensor) -> Result<Tensor> {
        to_sketch_domain(&self.forward(photos, None)?)
    }

    /// `G_p`: (sketch, class label) -> photo.
    pub fn sketch_to_photo(&self, sketches: &Tensor, labels: &Tensor) -> Result<Tensor> {
        if self.label.is_none() {
            return Err(Error::Argument("generator is not label-conditioned".into()));
        }
        self.forward(sketches, Some(labels))
    }
}

/// Rec. 709 weights, matching the luma conversion applied to sketch files.
pub const SKETCH_LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// `[B, 3, H, W]` -> luma replicated to `[B, 3, H, W]`.
pub fn to_sketch_domain(rgb: &Tensor) -> Result<Tensor> {
    let w = Tensor::new(&SKETCH_LUMA, rgb.device())?
        .to_dtype(rgb.dtype())?
        .reshape((1, 3, 1, 1))?;
    let luma = rgb.broadcast_mul(&w)?.sum_keepdim(1)?;
    Ok(luma.repeat((1, 3, 1, 1))?)
}
