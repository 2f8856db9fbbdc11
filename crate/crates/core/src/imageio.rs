//! Conversion of `[-1, 1]` image tensors to PNG files and sample grids.

use std::io::Cursor;
use std::path::Path;

use candle_core::{DType, Tensor};
use image::{ImageFormat, RgbImage};

use crate::dataset::array_to_rgb;
use crate::error::{Error, Result};

/// Splits a `[B, 3, H, W]` batch into RGB images.
pub fn tensor_to_images(batch: &Tensor) -> Result<Vec<RgbImage>> {
    let (b, c, h, w) = batch.dims4()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let batch = batch.detach().to_dtype(DType::F32)?;
    (0..b)
        .map(|i| {
            let data: Vec<f32> = batch.get(i)?.flatten_all()?.to_vec1()?;
            Ok(array_to_rgb(&data, h, w))
        })
        .collect()
}

/// Tiles rows of equally sized images; shorter rows are padded with white.
pub fn image_grid(rows: &[Vec<RgbImage>]) -> Result<RgbImage> {
    let first = rows
        .iter()
        .flat_map(|r| r.first())
        .next()
        .ok_or_else(|| Error::Argument("empty image grid".into()))?;
    let (w, h) = first.dimensions();
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    let mut grid =
        RgbImage::from_pixel(w * cols, h * rows.len() as u32, image::Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            if img.dimensions() != (w, h) {
                return Err(Error::Shape("grid images differ in size".into()));
            }
            image::imageops::replace(&mut grid, img, (c as u32 * w) as i64, (r as u32 * h) as i64);
        }
    }
    Ok(grid)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Data {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Argument(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}
