use candle_core::{Module, Tensor, D};
use candle_nn::{Conv2d, Conv2dConfig, ConvTranspose2d, ConvTranspose2dConfig, Embedding, Linear};

use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

/// Epsilon used by every instance-norm / AdaIN denominator.
pub const NORM_EPS: f64 = 1e-5;

pub fn conv2d(
    ps: &ParamStore,
    in_c: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Conv2d> {
    let weight = ps.get((out_c, in_c, kernel, kernel), "weight", Init::CONV)?;
    let bias = ps.get(out_c, "bias", Init::ZEROS)?;
    let cfg = Conv2dConfig {
        padding,
        stride,
        ..Default::default()
    };
    Ok(Conv2d::new(weight, Some(bias), cfg))
}

/// Stride-2 transposed conv that exactly doubles the spatial size.
pub fn conv_transpose2d_x2(ps: &ParamStore, in_c: usize, out_c: usize) -> Result<ConvTranspose2d> {
    let weight = ps.get((in_c, out_c, 3, 3), "weight", Init::CONV)?;
    let bias = ps.get(out_c, "bias", Init::ZEROS)?;
    let cfg = ConvTranspose2dConfig {
        padding: 1,
        output_padding: 1,
        stride: 2,
        dilation: 1,
    };
    Ok(ConvTranspose2d::new(weight, Some(bias), cfg))
}

pub fn linear(ps: &ParamStore, in_dim: usize, out_dim: usize) -> Result<Linear> {
    let weight = ps.get((out_dim, in_dim), "weight", Init::fan_in(in_dim))?;
    let bias = ps.get(out_dim, "bias", Init::fan_in(in_dim))?;
    Ok(Linear::new(weight, Some(bias)))
}

/// Linear layer with explicit weight and bias initialisation.
pub fn linear_with(
    ps: &ParamStore,
    in_dim: usize,
    out_dim: usize,
    weight_init: Init,
    bias_init: Init,
) -> Result<Linear> {
    let weight = ps.get((out_dim, in_dim), "weight", weight_init)?;
    let bias = ps.get(out_dim, "bias", bias_init)?;
    Ok(Linear::new(weight, Some(bias)))
}

pub fn embedding(ps: &ParamStore, n: usize, dim: usize) -> Result<Embedding> {
    let table = ps.get(
        (n, dim),
        "weight",
        Init::Normal {
            mean: 0.0,
            std: 1.0,
        },
    )?;
    Ok(Embedding::new(table, dim))
}

/// Per-sample, per-channel normalisation over the spatial plane (no affine).
pub fn instance_norm(xs: &Tensor) -> Result<Tensor> {
    let mean = xs.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    let centered = xs.broadcast_sub(&mean)?;
    let var = centered
        .sqr()?
        .mean_keepdim(D::Minus1)?
        .mean_keepdim(D::Minus2)?;
    let denom = (var + NORM_EPS)?.sqrt()?;
    Ok(centered.broadcast_div(&denom)?)
}

/// Normalisation over (C, H, W) per sample with a learned per-channel affine.
#[derive(Debug, Clone)]
pub struct LayerNorm2d {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm2d {
    pub fn new(ps: &ParamStore, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: ps.get((1, channels, 1, 1), "weight", Init::Const(1.0))?,
            bias: ps.get((1, channels, 1, 1), "bias", Init::ZEROS)?,
        })
    }

    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = xs.dims4()?;
        let flat = xs.reshape((b, c * h * w))?;
        let mean = flat.mean_keepdim(1)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let normed = centered
            .broadcast_div(&(var + NORM_EPS)?.sqrt()?)?
            .reshape((b, c, h, w))?;
        Ok(normed
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)?)
    }
}

/// Reflection padding on both spatial axes.
pub fn reflection_pad2d(xs: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(xs.clone());
    }
    let mut out = xs.contiguous()?;
    for dim in [2usize, 3] {
        let n = out.dim(dim)?;
        if n <= pad {
            return Err(Error::Shape(format!(
                "reflection pad {pad} needs spatial size > {pad}, got {n}"
            )));
        }
        // [pad, .., 1, 0, 1, .., n-1, n-2, .., n-1-pad]
        let idx: Vec<u32> = (1..=pad)
            .rev()
            .chain(0..n)
            .chain((n - 1 - pad..n - 1).rev())
            .map(|i| i as u32)
            .collect();
        let idx = Tensor::new(idx.as_slice(), out.device())?;
        out = out.index_select(&idx, dim)?;
    }
    Ok(out)
}

pub fn leaky_relu(xs: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(xs, 0.2)?)
}

/// Convenience: run a candle module and lift its error.
pub fn apply<M: Module>(m: &M, xs: &Tensor) -> Result<Tensor> {
    Ok(m.forward(xs)?)
}
