//! FID, judge accuracy, embedding export and batch synthesis over a test set.

mod fid;
mod generate;
mod judge;
mod metrics;

use candle_core::{DType, Device, Tensor};

pub use fid::{compute_fid, frechet_distance, psd_sqrt, GaussianStats, FID_MIN_RELIABLE};
pub use generate::{
    generate_test_set, tensor_to_array, GeneratedEntry, GeneratedSet, SkippedInput,
    GENERATED_MANIFEST,
};
pub use judge::{split_photos, train_judge, Judge, JudgeConfig, JudgeReport};
pub use metrics::{
    compute_accuracy, evaluate, export_embeddings, judge_accuracy, EmbeddingRow, MetricsReport,
    Split, SplitMetrics,
};

use crate::dataset::ImageArray;
use crate::error::Result;

/// A frozen image network whose pooled activations feed FID and embeddings.
pub trait FeatureExtractor {
    /// `[B, 3, S, S]` images in `[-1, 1]` to `[B, D]` features.
    fn features(&self, images: &Tensor) -> Result<Tensor>;
    fn input_size(&self) -> usize;
}

/// Features of every image, batched, as `f64` rows.
pub fn extract_features(
    extractor: &dyn FeatureExtractor,
    images: &[ImageArray],
    batch: usize,
    device: &Device,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        let t = judge::arrays_to_tensor(chunk, device)?;
        let f = extractor.features(&t)?.to_dtype(DType::F64)?;
        rows.extend(f.to_vec2::<f64>()?);
    }
    Ok(rows)
}
