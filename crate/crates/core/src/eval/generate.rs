use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::dataset::{load_preprocessed, ClassVocabulary, Domain, ImageArray};
use crate::error::{Error, Result};
use crate::imageio::{save_png, tensor_to_images};
use crate::models::Generator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEntry {
    pub file: String,
    pub source: PathBuf,
    pub label: u32,
    pub class: String,
    pub open_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedInput {
    pub source: PathBuf,
    pub reason: String,
}

/// Manifest of a synthesized test set plus the in-memory outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedSet {
    pub entries: Vec<GeneratedEntry>,
    pub skipped: Vec<SkippedInput>,
    #[serde(skip)]
    pub images: Vec<ImageArray>,
}

pub const GENERATED_MANIFEST: &str = "manifest.json";

/// `[3, S, S]` tensor to a channel-major array.
pub fn tensor_to_array(t: &Tensor) -> Result<ImageArray> {
    let size = t.dim(1)?;
    Ok(ImageArray {
        size,
        data: t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?,
    })
}

/// One synthesized photo per `(sketch, label)` input, named `{class}_{idx}.png`
/// with a per-class running index. Unreadable sketches are skipped and listed.
pub fn generate_test_set(
    g_p: &Generator,
    vocabulary: &ClassVocabulary,
    inputs: &[(PathBuf, u32)],
    image_size: usize,
    out_dir: Option<&Path>,
    device: &Device,
) -> Result<GeneratedSet> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let mut counters: BTreeMap<u32, usize> = BTreeMap::new();
    let mut set = GeneratedSet {
        entries: Vec::new(),
        skipped: Vec::new(),
        images: Vec::new(),
    };
    for (path, label) in inputs {
        vocabulary.check_label(*label)?;
        let sketch = match load_preprocessed(path, image_size, Domain::Sketch) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                set.skipped.push(SkippedInput {
                    source: path.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let x = Tensor::from_vec(sketch.data, (1, 3, image_size, image_size), device)?;
        let labels = Tensor::new(&[*label], device)?;
        let photo = g_p.sketch_to_photo(&x, &labels)?.detach();
        let class = vocabulary
            .name(*label as usize)
            .unwrap_or("unknown")
            .to_string();
        let idx = counters.entry(*label).or_insert(0);
        let file = format!("{class}_{:04}.png", *idx);
        *idx += 1;
        if let Some(dir) = out_dir {
            save_png(&tensor_to_images(&photo)?[0], &dir.join(&file))?;
        }
        set.images.push(tensor_to_array(&photo.get(0)?)?);
        set.entries.push(GeneratedEntry {
            file,
            source: path.clone(),
            label: *label,
            open_domain: vocabulary.is_open(*label as usize),
            class,
        });
    }
    if let Some(dir) = out_dir {
        let path = dir.join(GENERATED_MANIFEST);
        fs::write(&path, serde_json::to_vec_pretty(&set)?)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(set)
}
