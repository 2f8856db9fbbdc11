use candle_core::{Tensor, D};

use super::layers::NORM_EPS;
use crate::error::{Error, Result};

/// Adaptive instance normalisation.
///
/// For every `(b, c)` plane: `scale[b,c] * (x - mean) / sqrt(var + eps) + shift[b,c]`,
/// with the biased variance taken over the `H x W` plane.
pub fn adain(features: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = features.dims4()?;
    if h * w < 2 {
        return Err(Error::Shape(format!(
            "adain needs at least two spatial elements per plane, got {h}x{w}"
        )));
    }
    for (name, t) in [("scale", scale), ("shift", shift)] {
        if t.dims() != [b, c] {
            return Err(Error::Shape(format!(
                "adain {name} must be [{b}, {c}], got {:?}",
                t.dims()
            )));
        }
    }
    let mean = features.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    let centered = features.broadcast_sub(&mean)?;
    let var = centered
        .sqr()?
        .mean_keepdim(D::Minus1)?
        .mean_keepdim(D::Minus2)?;
    let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    let scale = scale.reshape((b, c, 1, 1))?;
    let shift = shift.reshape((b, c, 1, 1))?;
    Ok(normed.broadcast_mul(&scale)?.broadcast_add(&shift)?)
}
