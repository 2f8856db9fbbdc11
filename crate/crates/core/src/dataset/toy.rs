//! Synthetic corpus in the on-disk dataset layout, for smoke runs and tests.
//!
//! Each class is a filled shape with a class colour on a white background.
//! Sketches are black, slightly wobbly outlines of the same shapes, so the
//! colour (and hence the class) can only come from the label.

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{PHOTOS_DIR, SKETCHES_DIR, TEST_SKETCHES_DIR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyShape {
    Disk,
    Square,
}

#[derive(Debug, Clone)]
pub struct ToyClass {
    pub name: String,
    pub color: [u8; 3],
    pub shape: ToyShape,
    /// Whether training sketches are written for this class.
    pub with_sketches: bool,
}

#[derive(Debug, Clone)]
pub struct ToyDatasetSpec {
    pub classes: Vec<ToyClass>,
    pub size: u32,
    pub photos_per_class: usize,
    pub sketches_per_class: usize,
    pub test_sketches_per_class: usize,
    pub seed: u64,
}

impl ToyDatasetSpec {
    /// Two round classes that differ only in colour; `lime` has no sketches.
    pub fn two_class(size: u32) -> Self {
        Self {
            classes: vec![
                ToyClass {
                    name: "orange".into(),
                    color: [240, 140, 20],
                    shape: ToyShape::Disk,
                    with_sketches: true,
                },
                ToyClass {
                    name: "lime".into(),
                    color: [60, 180, 60],
                    shape: ToyShape::Disk,
                    with_sketches: false,
                },
            ],
            size,
            photos_per_class: 8,
            sketches_per_class: 8,
            test_sketches_per_class: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Placement {
    cx: f32,
    cy: f32,
    radius: f32,
    phase: f32,
}

impl Placement {
    fn sample(rng: &mut ChaCha8Rng, size: f32) -> Self {
        Self {
            cx: size * rng.random_range(0.4..0.6),
            cy: size * rng.random_range(0.4..0.6),
            radius: size * rng.random_range(0.22..0.32),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    /// Signed distance-like value: negative inside the shape.
    fn level(&self, shape: ToyShape, x: f32, y: f32, wobble: f32) -> f32 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let angle = dy.atan2(dx);
        let r = self.radius * (1.0 + wobble * (3.0 * angle + self.phase).sin());
        match shape {
            ToyShape::Disk => (dx * dx + dy * dy).sqrt() - r,
            ToyShape::Square => dx.abs().max(dy.abs()) - r * 0.85,
        }
    }
}

fn render_photo(class: &ToyClass, p: Placement, size: u32) -> RgbImage {
    RgbImage::from_fn(size, size, |x, y| {
        let d = p.level(class.shape, x as f32 + 0.5, y as f32 + 0.5, 0.0);
        if d < 0.0 {
            // darken toward the rim a little
            let shade = 1.0 - 0.25 * (1.0 + d / p.radius).clamp(0.0, 1.0);
            let c = class.color.map(|v| (v as f32 * shade).round() as u8);
            Rgb(c)
        } else {
            Rgb([255, 255, 255])
        }
    })
}

fn render_sketch(class: &ToyClass, p: Placement, size: u32) -> RgbImage {
    let thickness = (size as f32 / 32.0).max(1.0);
    RgbImage::from_fn(size, size, |x, y| {
        let d = p.level(class.shape, x as f32 + 0.5, y as f32 + 0.5, 0.04);
        if d.abs() <= thickness {
            Rgb([0, 0, 0])
        } else {
            Rgb([255, 255, 255])
        }
    })
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    img.save(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes the corpus under `root` using the standard directory layout.
pub fn write_toy_dataset(root: &Path, spec: &ToyDatasetSpec) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.size as f32;
    for class in &spec.classes {
        for i in 0..spec.photos_per_class {
            let p = Placement::sample(&mut rng, size);
            save(
                &render_photo(class, p, spec.size),
                &root
                    .join(PHOTOS_DIR)
                    .join(&class.name)
                    .join(format!("{i:04}.png")),
            )?;
        }
        if class.with_sketches {
            for i in 0..spec.sketches_per_class {
                let p = Placement::sample(&mut rng, size);
                save(
                    &render_sketch(class, p, spec.size),
                    &root
                        .join(SKETCHES_DIR)
                        .join(&class.name)
                        .join(format!("{i:04}.png")),
                )?;
            }
        } else {
            fs::create_dir_all(root.join(SKETCHES_DIR).join(&class.name))
                .map_err(|e| Error::io("creating sketch dir", e))?;
        }
        for i in 0..spec.test_sketches_per_class {
            let p = Placement::sample(&mut rng, size);
            save(
                &render_sketch(class, p, spec.size),
                &root
                    .join(TEST_SKETCHES_DIR)
                    .join(&class.name)
                    .join(format!("{i:04}.png")),
            )?;
        }
    }
    Ok(())
}
