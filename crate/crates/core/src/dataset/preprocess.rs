use std::path::Path;

use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView, ImageReader, Rgb, RgbImage, Rgba};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Sketch,
    Photo,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Sketch => f.write_str("sketch"),
            Domain::Photo => f.write_str("photo"),
        }
    }
}

/// A preprocessed `[3, size, size]` image in `[-1, 1]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageArray {
    pub size: usize,
    pub data: Vec<f32>,
}

impl ImageArray {
    pub fn flip_horizontal(&self) -> ImageArray {
        let s = self.size;
        let mut data = vec![0.0; self.data.len()];
        for c in 0..3 {
            for y in 0..s {
                let row = (c * s + y) * s;
                for x in 0..s {
                    data[row + x] = self.data[row + s - 1 - x];
                }
            }
        }
        ImageArray { size: s, data }
    }
}

pub fn decode_image(path: &Path) -> Result<DynamicImage> {
    let data_err = |reason: String| Error::Data {
        path: path.to_path_buf(),
        reason,
    };
    ImageReader::open(path)
        .map_err(|e| data_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| data_err(e.to_string()))?
        .decode()
        .map_err(|e| data_err(e.to_string()))
}

pub fn decode_image_bytes(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| Error::Data {
        path: "<memory>".into(),
        reason: e.to_string(),
    })
}

/// Flattens transparency onto a white background.
fn to_rgb_on_white(raw: &DynamicImage) -> RgbImage {
    if !raw.color().has_alpha() {
        return raw.to_rgb8();
    }
    let rgba = raw.to_rgba8();
    let mut out = RgbImage::new(rgba.width(), rgba.height());
    for (x, y, Rgba([r, g, b, a])) in rgba.enumerate_pixels().map(|(x, y, p)| (x, y, *p)) {
        let alpha = a as f32 / 255.0;
        let blend = |v: u8| (v as f32 * alpha + 255.0 * (1.0 - alpha)).round() as u8;
        out.put_pixel(x, y, Rgb([blend(r), blend(g), blend(b)]));
    }
    out
}

/// Resizes to `size x size` (bilinear), forces three channels and maps `[0, 255]`
/// linearly onto `[-1, 1]`. Sketches are reduced to luminance first, so a sketch
/// is always monochrome with identical channels.
pub fn preprocess_image(raw: &DynamicImage, size: usize, domain: Domain) -> Result<ImageArray> {
    let (w, h) = raw.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Argument("image has no pixels".into()));
    }
    if size == 0 {
        return Err(Error::Argument("target size must be positive".into()));
    }
    let mut rgb = to_rgb_on_white(raw);
    if domain == Domain::Sketch {
        let luma = DynamicImage::ImageRgb8(rgb).to_luma8();
        rgb = DynamicImage::ImageLuma8(luma).to_rgb8();
    }
    if w as usize != size || h as usize != size {
        rgb = image::imageops::resize(&rgb, size as u32, size as u32, FilterType::Triangle);
    }
    let plane = size * size;
    let mut data = vec![0.0f32; 3 * plane];
    for (x, y, px) in rgb.enumerate_pixels() {
        let idx = y as usize * size + x as usize;
        for c in 0..3 {
            data[c * plane + idx] = px[c] as f32 / 127.5 - 1.0;
        }
    }
    Ok(ImageArray { size, data })
}

pub fn load_preprocessed(path: &Path, size: usize, domain: Domain) -> Result<ImageArray> {
    let raw = decode_image(path)?;
    preprocess_image(&raw, size, domain).map_err(|e| match e {
        Error::Argument(reason) => Error::Data {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

/// Inverse mapping of [`preprocess_image`] for one `[3, H, W]` channel-major array.
pub fn array_to_rgb(data: &[f32], height: usize, width: usize) -> RgbImage {
    let plane = height * width;
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let idx = y as usize * width + x as usize;
        let px = |c: usize| {
            ((data[c * plane + idx] + 1.0) * 127.5)
                .round()
                .clamp(0.0, 255.0) as u8
        };
        Rgb([px(0), px(1), px(2)])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma};
    use proptest::prelude::*;

    #[test]
    fn white_maps_to_plus_one_black_to_minus_one() {
        let white = DynamicImage::ImageRgb8(RgbImage::from_pixel(5, 5, Rgb([255, 255, 255])));
        let a = preprocess_image(&white, 5, Domain::Photo).unwrap();
        assert!(a.data.iter().all(|&v| v == 1.0));
        let black = DynamicImage::ImageRgb8(RgbImage::from_pixel(5, 5, Rgb([0, 0, 0])));
        let a = preprocess_image(&black, 5, Domain::Photo).unwrap();
        assert!(a.data.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn resize_to_requested_size() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(512, 512, Rgb([10, 20, 30])));
        let a = preprocess_image(&img, 256, Domain::Photo).unwrap();
        assert_eq!(a.size, 256);
        assert_eq!(a.data.len(), 3 * 256 * 256);
    }

    #[test]
    fn non_square_input_is_stretched() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(40, 10, Rgb([200, 200, 200])));
        let a = preprocess_image(&img, 16, Domain::Sketch).unwrap();
        assert_eq!(a.data.len(), 3 * 16 * 16);
    }

    #[test]
    fn grayscale_replicated_to_three_channels() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_fn(4, 4, |x, _| Luma([x as u8 * 60])));
        let a = preprocess_image(&img, 4, Domain::Sketch).unwrap();
        let plane = 16;
        for i in 0..plane {
            assert_eq!(a.data[i], a.data[plane + i]);
            assert_eq!(a.data[i], a.data[2 * plane + i]);
        }
    }

    #[test]
    fn transparent_pixels_become_white() {
        let img = DynamicImage::ImageRgba8(image::RgbaImage::from_pixel(3, 3, Rgba([0, 0, 0, 0])));
        let a = preprocess_image(&img, 3, Domain::Sketch).unwrap();
        assert!(a.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn undecodable_file_is_data_error_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"definitely not a png").unwrap();
        match load_preprocessed(&p, 8, Domain::Photo) {
            Err(Error::Data { path, .. }) => assert_eq!(path, p),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // re-encoding a preprocessed array and preprocessing it again at the
        // same size is the identity
        #[test]
        fn preprocess_is_idempotent_at_fixed_size(pixels in proptest::collection::vec(any::<u8>(), 3 * 36)) {
            let img = RgbImage::from_fn(6, 6, |x, y| {
                let i = ((y * 6 + x) * 3) as usize;
                Rgb([pixels[i], pixels[i + 1], pixels[i + 2]])
            });
            let first = preprocess_image(&DynamicImage::ImageRgb8(img), 6, Domain::Photo).unwrap();
            let again = array_to_rgb(&first.data, 6, 6);
            let second = preprocess_image(&DynamicImage::ImageRgb8(again), 6, Domain::Photo).unwrap();
            for (a, b) in first.data.iter().zip(&second.data) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
