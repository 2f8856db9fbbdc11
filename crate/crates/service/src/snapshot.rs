use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use image::imageops::FilterType;
use image::RgbImage;
use s2p_core::archive::sha256_hex;
use s2p_core::dataset::{decode_image_bytes, preprocess_image, ClassVocabulary, Domain};
use s2p_core::imageio::{encode_png, tensor_to_images};
use s2p_core::models::{Generator, ModelConfig};
use s2p_core::trainer::load_checkpoint;

use crate::error::ApiError;

/// Largest edge accepted for a requested output size.
pub const MAX_OUTPUT_SIZE: usize = 2048;

/// A frozen, read-only view of one checkpoint.
#[derive(Debug)]
pub struct Snapshot {
    pub path: PathBuf,
    /// SHA-256 of the checkpoint file bytes.
    pub fingerprint: String,
    pub vocabulary: ClassVocabulary,
    pub model: ModelConfig,
    pub image_size: usize,
    g_s: Generator,
    g_p: Generator,
}

impl Snapshot {
    pub fn load(path: &Path) -> s2p_core::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| s2p_core::Error::Io {
            context: format!("reading {}", path.display()),
            source: e,
        })?;
        let fingerprint = sha256_hex(&bytes);
        let bundle = load_checkpoint(path, &Device::Cpu, None, false)?;
        let nets = bundle.networks(&Device::Cpu)?;
        Ok(Self {
            path: path.to_path_buf(),
            fingerprint,
            vocabulary: bundle.vocabulary,
            model: bundle.model,
            image_size: bundle.train.image_size,
            g_s: nets.g_s,
            g_p: nets.g_p,
        })
    }

    /// Label name to index, or the 422 error listing the vocabulary.
    pub fn label_index(&self, name: &str) -> Result<u32, ApiError> {
        self.vocabulary
            .index_of(name)
            .map(|i| i as u32)
            .ok_or_else(|| ApiError::UnknownLabel {
                label: name.to_string(),
                vocabulary: self.vocabulary.names().to_vec(),
            })
    }

    fn input(&self, png: &[u8], domain: Domain) -> Result<Tensor, ApiError> {
        let raw = decode_image_bytes(png).map_err(|e| ApiError::BadImage(e.to_string()))?;
        let arr = preprocess_image(&raw, self.image_size, domain)
            .map_err(|e| ApiError::BadImage(e.to_string()))?;
        Tensor::from_vec(arr.data, (1, 3, self.image_size, self.image_size), &Device::Cpu)
            .map_err(ApiError::internal)
    }

    fn output(&self, t: &Tensor, size: Option<usize>) -> Result<Vec<u8>, ApiError> {
        let mut img: RgbImage = tensor_to_images(t)
            .map_err(ApiError::internal)?
            .into_iter()
            .next()
            .ok_or_else(|| ApiError::Internal("generator returned no image".into()))?;
        if let Some(s) = size {
            if s != self.image_size {
                img = image::imageops::resize(&img, s as u32, s as u32, FilterType::Triangle);
            }
        }
        encode_png(&img).map_err(ApiError::internal)
    }

    /// Sketch PNG and label index to photo PNG.
    pub fn synthesize(&self, sketch_png: &[u8], label: u32, size: Option<usize>) -> Result<Vec<u8>, ApiError> {
        check_size(size)?;
        let x = self.input(sketch_png, Domain::Sketch)?;
        let labels = Tensor::new(&[label], &Device::Cpu).map_err(ApiError::internal)?;
        let y = self.g_p.sketch_to_photo(&x, &labels).map_err(ApiError::internal)?;
        self.output(&y, size)
    }

    /// Photo PNG to sketch PNG.
    pub fn extract_sketch(&self, photo_png: &[u8], size: Option<usize>) -> Result<Vec<u8>, ApiError> {
        check_size(size)?;
        let x = self.input(photo_png, Domain::Photo)?;
        let y = self.g_s.photo_to_sketch(&x).map_err(ApiError::internal)?;
        self.output(&y, size)
    }
}

fn check_size(size: Option<usize>) -> Result<(), ApiError> {
    match size {
        Some(s) if s == 0 || s > MAX_OUTPUT_SIZE => Err(ApiError::BadRequest(format!(
            "size must be in 1..={MAX_OUTPUT_SIZE}, got {s}"
        ))),
        _ => Ok(()),
    }
}
