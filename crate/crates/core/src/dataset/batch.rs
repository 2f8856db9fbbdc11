use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Tensor};
use rand::Rng;

use super::manifest::DatasetManifest;
use super::preprocess::{load_preprocessed, Domain, ImageArray};
use crate::error::{Error, Result};

/// A minibatch `[B, 3, H, W]` in `[-1, 1]` with one class label per item.
#[derive(Debug, Clone)]
pub struct LabeledImageBatch {
    pub images: Tensor,
    pub labels: Vec<u32>,
    pub domain: Domain,
}

impl LabeledImageBatch {
    pub fn new(images: Tensor, labels: Vec<u32>, domain: Domain) -> Result<Self> {
        let (b, c, h, w) = images.dims4()?;
        if b != labels.len() {
            return Err(Error::Shape(format!(
                "{b} images but {} labels",
                labels.len()
            )));
        }
        if c != 3 || h != w {
            return Err(Error::Shape(format!(
                "expected [B, 3, S, S] images, got {:?}",
                images.dims()
            )));
        }
        Ok(Self {
            images,
            labels,
            domain,
        })
    }

    pub fn from_arrays(
        arrays: &[ImageArray],
        labels: Vec<u32>,
        domain: Domain,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let size = arrays
            .first()
            .map(|a| a.size)
            .ok_or_else(|| Error::Argument("empty batch".into()))?;
        if arrays.iter().any(|a| a.size != size) {
            return Err(Error::Shape("batch images differ in size".into()));
        }
        let mut data = Vec::with_capacity(arrays.len() * 3 * size * size);
        for a in arrays {
            data.extend_from_slice(&a.data);
        }
        let images =
            Tensor::from_vec(data, (arrays.len(), 3, size, size), device)?.to_dtype(dtype)?;
        Self::new(images, labels, domain)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::new(self.labels.as_slice(), self.images.device())?)
    }
}

/// One sampled dataset item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledItem {
    pub path: PathBuf,
    pub label: u32,
    pub flip: bool,
}

/// Index-level sampling for one training step.
///
/// Photos are drawn uniformly over every class's photos, sketches uniformly
/// over in-domain training sketches only; both with replacement and
/// independently of each other.
pub fn sample_training_items<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    batch_size: usize,
    flip: bool,
    rng: &mut R,
) -> Result<(Vec<SampledItem>, Vec<SampledItem>)> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    let photos = manifest.photo_items();
    let sketches = manifest.training_sketch_items();
    if photos.is_empty() {
        return Err(Error::Config("dataset has no training photos".into()));
    }
    if sketches.is_empty() {
        return Err(Error::Config(
            "dataset has no in-domain training sketches".into(),
        ));
    }
    let draw = |items: &[(PathBuf, u32)], rng: &mut R| -> Vec<SampledItem> {
        (0..batch_size)
            .map(|_| {
                let (path, label) = &items[rng.random_range(0..items.len())];
                let flip = flip && rng.random_bool(0.5);
                SampledItem {
                    path: path.clone(),
                    label: *label,
                    flip,
                }
            })
            .collect()
    };
    let p = draw(&photos, rng);
    let s = draw(&sketches, rng);
    Ok((p, s))
}

/// Decodes sampled items into batches, optionally memoising preprocessed images.
#[derive(Debug, Clone)]
pub struct BatchLoader {
    pub image_size: usize,
    pub flip: bool,
    pub dtype: DType,
    pub device: Device,
    cache: Option<Arc<Mutex<HashMap<(PathBuf, Domain), Arc<ImageArray>>>>>,
}

impl BatchLoader {
    pub fn new(image_size: usize, flip: bool, cache: bool, dtype: DType, device: &Device) -> Self {
        Self {
            image_size,
            flip,
            dtype,
            device: device.clone(),
            cache: cache.then(|| Arc::new(Mutex::new(HashMap::new()))),
        }
    }

    pub fn load(&self, path: &std::path::Path, domain: Domain) -> Result<Arc<ImageArray>> {
        if let Some(cache) = &self.cache {
            let key = (path.to_path_buf(), domain);
            if let Some(hit) = cache.lock().expect("image cache poisoned").get(&key) {
                return Ok(hit.clone());
            }
            let arr = Arc::new(load_preprocessed(path, self.image_size, domain)?);
            cache
                .lock()
                .expect("image cache poisoned")
                .insert(key, arr.clone());
            return Ok(arr);
        }
        Ok(Arc::new(load_preprocessed(path, self.image_size, domain)?))
    }

    pub fn batch(&self, items: &[SampledItem], domain: Domain) -> Result<LabeledImageBatch> {
        let mut arrays = Vec::with_capacity(items.len());
        for item in items {
            let arr = self.load(&item.path, domain)?;
            arrays.push(if item.flip {
                arr.flip_horizontal()
            } else {
                (*arr).clone()
            });
        }
        let labels = items.iter().map(|i| i.label).collect();
        LabeledImageBatch::from_arrays(&arrays, labels, domain, self.dtype, &self.device)
    }

    /// Draws the unpaired `(photo, sketch)` batches for one training step.
    pub fn next_training_batch<R: Rng + ?Sized>(
        &self,
        manifest: &DatasetManifest,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<(LabeledImageBatch, LabeledImageBatch)> {
        let (p, s) = sample_training_items(manifest, batch_size, self.flip, rng)?;
        Ok((
            self.batch(&p, Domain::Photo)?,
            self.batch(&s, Domain::Sketch)?,
        ))
    }
}
