use candle_core::Tensor;

use crate::error::{Error, Result};

/// Sub-pixel rearrangement `[B, C*r*r, H, W] -> [B, C, r*H, r*W]`.
///
/// `out[b, c, r*h + i, r*w + j] = in[b, c*r*r + i*r + j, h, w]`.
pub fn subpixel_upsample(xs: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c_in, h, w) = xs.dims4()?;
    if r == 0 || c_in % (r * r) != 0 {
        return Err(Error::Shape(format!(
            "sub-pixel upsample: {c_in} channels not divisible by r^2 = {}",
            r * r
        )));
    }
    let c = c_in / (r * r);
    Ok(xs
        .reshape((b, c, r, r, h, w))?
        .permute((0, 1, 4, 2, 5, 3))?
        .reshape((b, c, h * r, w * r))?)
}

/// Inverse of [`subpixel_upsample`]: `[B, C, r*H, r*W] -> [B, C*r*r, H, W]`.
pub fn subpixel_downsample(xs: &Tensor, r: usize) -> Result<Tensor> {
    let (b, c, hr, wr) = xs.dims4()?;
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return Err(Error::Shape(format!(
            "sub-pixel downsample: spatial {hr}x{wr} not divisible by {r}"
        )));
    }
    let (h, w) = (hr / r, wr / r);
    Ok(xs
        .reshape((b, c, h, r, w, r))?
        .permute((0, 1, 3, 5, 2, 4))?
        .reshape((b, c * r * r, h, w))?)
}
