//! Independent photo classifier used to score synthesized images.
//!
//! It is trained on real photos only, never on generator output, so its
//! accuracy on synthesized photos measures how recognisable they are.

use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::TensorArchive;
use crate::dataset::{
    BatchLoader, ClassVocabulary, DatasetManifest, Domain, ImageArray, SampledItem,
};
use crate::error::{Error, Result};
use crate::models::{Backbone, Classifier, ClassifierSpec};
use crate::nn::ParamStore;
use crate::trainer::Adam;

use super::FeatureExtractor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub backbone: Backbone,
    pub base_width: usize,
    pub image_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of each class's photos held out for validation.
    pub val_fraction: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::SimpleCnn,
            base_width: 32,
            image_size: 256,
            epochs: 20,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub n_train: usize,
    pub n_val: usize,
    pub train_accuracy: f64,
    /// `None` when no photo could be held out.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JudgeMeta {
    kind: String,
    vocabulary: ClassVocabulary,
    spec: ClassifierSpec,
    image_size: usize,
}

#[derive(Debug, Clone)]
pub struct Judge {
    pub vocabulary: ClassVocabulary,
    pub image_size: usize,
    classifier: Classifier,
    store: ParamStore,
}

impl Judge {
    pub fn new(
        vocabulary: ClassVocabulary,
        backbone: Backbone,
        base_width: usize,
        image_size: usize,
        seed: u64,
        device: &Device,
    ) -> Result<Self> {
        let store = ParamStore::new(seed, DType::F32, device);
        let spec = ClassifierSpec {
            backbone,
            n_classes: vocabulary.len(),
            base_width,
        };
        let classifier = Classifier::new(&store, spec)?;
        Ok(Self {
            vocabulary,
            image_size,
            classifier,
            store,
        })
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        self.classifier.forward(images)
    }

    pub fn predict(&self, images: &Tensor) -> Result<Vec<u32>> {
        Ok(self.logits(images)?.argmax(D::Minus1)?.to_vec1()?)
    }

    pub fn predict_arrays(&self, images: &[ImageArray], batch: usize) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch.max(1)) {
            out.extend(self.predict(&arrays_to_tensor(chunk, &self.store.device())?)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = JudgeMeta {
            kind: "judge".into(),
            vocabulary: self.vocabulary.clone(),
            spec: *self.classifier.spec(),
            image_size: self.image_size,
        };
        let mut archive = TensorArchive::new(serde_json::to_value(meta)?);
        archive.tensors = self.store.snapshot()?;
        archive.save(path)
    }

    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let archive = TensorArchive::load(path, device)?;
        let meta: JudgeMeta = serde_json::from_value(archive.meta)
            .map_err(|e| Error::integrity("header", e.to_string()))?;
        if meta.kind != "judge" {
            return Err(Error::integrity("kind", "not a judge classifier file"));
        }
        if meta.spec.n_classes != meta.vocabulary.len() {
            return Err(Error::integrity(
                "vocabulary",
                "class count does not match the classifier head",
            ));
        }
        let judge = Judge::new(
            meta.vocabulary,
            meta.spec.backbone,
            meta.spec.base_width,
            meta.image_size,
            0,
            device,
        )?;
        judge.store.load(&archive.tensors)?;
        Ok(judge)
    }

    /// Errors unless `vocabulary` names the same classes in the same order.
    pub fn check_vocabulary(&self, vocabulary: &ClassVocabulary) -> Result<()> {
        if self.vocabulary.names() != vocabulary.names() {
            return Err(Error::VocabularyMismatch(format!(
                "judge classes {:?} differ from {:?}",
                self.vocabulary.names(),
                vocabulary.names()
            )));
        }
        Ok(())
    }
}

impl FeatureExtractor for Judge {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.classifier.features(images)
    }

    fn input_size(&self) -> usize {
        self.image_size
    }
}

pub(crate) fn arrays_to_tensor(arrays: &[ImageArray], device: &Device) -> Result<Tensor> {
    let size = arrays
        .first()
        .map(|a| a.size)
        .ok_or_else(|| Error::Argument("empty image set".into()))?;
    if arrays.iter().any(|a| a.size != size) {
        return Err(Error::Shape("images differ in size".into()));
    }
    let data: Vec<f32> = arrays.iter().flat_map(|a| a.data.iter().copied()).collect();
    Ok(Tensor::from_vec(
        data,
        (arrays.len(), 3, size, size),
        device,
    )?)
}

/// Per-class split of the photo list into training and validation items.
pub fn split_photos(
    manifest: &DatasetManifest,
    val_fraction: f64,
    seed: u64,
) -> (
    Vec<(std::path::PathBuf, u32)>,
    Vec<(std::path::PathBuf, u32)>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, photos) in manifest.photos.iter().enumerate() {
        let mut photos = photos.clone();
        photos.shuffle(&mut rng);
        let n_val = if photos.len() >= 2 {
            ((photos.len() as f64 * val_fraction).round() as usize).min(photos.len() - 1)
        } else {
            0
        };
        for (i, p) in photos.into_iter().enumerate() {
            if i < n_val {
                val.push((p, label as u32));
            } else {
                train.push((p, label as u32));
            }
        }
    }
    (train, val)
}

fn accuracy_on(
    judge: &Judge,
    loader: &BatchLoader,
    items: &[(std::path::PathBuf, u32)],
) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in items.chunks(16) {
        let sampled: Vec<SampledItem> = chunk
            .iter()
            .map(|(path, label)| SampledItem {
                path: path.clone(),
                label: *label,
                flip: false,
            })
            .collect();
        let batch = loader.batch(&sampled, Domain::Photo)?;
        let pred = judge.predict(&batch.images)?;
        correct += pred
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Trains a judge with cross-entropy on real photos (held-out split for validation).
pub fn train_judge(
    manifest: &DatasetManifest,
    config: &JudgeConfig,
    device: &Device,
) -> Result<(Judge, JudgeReport)> {
    if config.epochs == 0 || config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(Error::Config(
            "judge epochs, batch size and lr must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(Error::Config(
            "judge validation fraction must be in [0, 1)".into(),
        ));
    }
    let (train, val) = split_photos(manifest, config.val_fraction, config.seed);
    if train.is_empty() {
        return Err(Error::Config("no photos to train the judge on".into()));
    }
    let judge = Judge::new(
        manifest.vocabulary.clone(),
        config.backbone,
        config.base_width,
        config.image_size,
        config.seed,
        device,
    )?;
    let mut opt = Adam::new(&judge.store, config.lr, (0.9, 0.999))?;
    let loader = BatchLoader::new(config.image_size, true, true, DType::F32, device);
    let eval_loader = BatchLoader::new(config.image_size, false, true, DType::F32, device);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a75_6467_65);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let items: Vec<SampledItem> = chunk
                .iter()
                .map(|&i| SampledItem {
                    path: train[i].0.clone(),
                    label: train[i].1,
                    flip: rng.random_bool(0.5),
                })
                .collect();
            let batch = loader.batch(&items, Domain::Photo)?;
            let logits = judge.logits(&batch.images)?;
            let loss = candle_nn::loss::cross_entropy(&logits, &batch.label_tensor()?)?;
            total += loss.to_scalar::<f32>()? as f64;
            opt.step(&loss.backward()?)?;
        }
        log::debug!("judge epoch {} loss {:.4}", epoch + 1, total);
    }
    let report = JudgeReport {
        n_train: train.len(),
        n_val: val.len(),
        train_accuracy: accuracy_on(&judge, &eval_loader, &train)?,
        val_accuracy: if val.is_empty() {
            None
        } else {
            Some(accuracy_on(&judge, &eval_loader, &val)?)
        },
    };
    Ok((judge, report))
}
