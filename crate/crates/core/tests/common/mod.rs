#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use std::path::Path;

use candle_core::{DType, Device};
use s2p_core::dataset::toy::{write_toy_dataset, ToyDatasetSpec};
use s2p_core::dataset::{
    load_dataset_manifest, BatchLoader, ClassVocabulary, DatasetManifest, LabeledImageBatch,
};
use s2p_core::models::{Backbone, ModelConfig};
use s2p_core::trainer::{TrainConfig, TrainState};

pub fn toy_vocab() -> ClassVocabulary {
    ClassVocabulary::new(vec!["orange".into(), "lime".into()], &["lime"]).unwrap()
}

pub fn toy_manifest(root: &Path, size: u32) -> DatasetManifest {
    write_toy_dataset(root, &ToyDatasetSpec::two_class(size)).unwrap();
    load_dataset_manifest(root, &toy_vocab()).unwrap()
}

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        base_width: 4,
        n_blocks: 1,
        embed_dim: 8,
        d_layers: 3,
        d_base_width: 4,
        classifier: Backbone::SimpleCnn,
        classifier_width: 2,
    }
}

pub fn tiny_train(image_size: usize) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        image_size,
        sample_every: 0,
        checkpoint_every: 1,
        ..TrainConfig::default()
    }
}

pub fn state(model: ModelConfig, config: TrainConfig) -> TrainState {
    TrainState::new(model, config, toy_vocab(), &Device::Cpu).unwrap()
}

/// Deterministic batches drawn from the manifest with the state's data stream.
pub fn next_batches(
    state: &mut TrainState,
    manifest: &DatasetManifest,
) -> (LabeledImageBatch, LabeledImageBatch) {
    let loader = BatchLoader::new(
        state.config.image_size,
        false,
        false,
        DType::F32,
        &Device::Cpu,
    );
    loader
        .next_training_batch(manifest, state.config.batch_size, &mut state.data_rng)
        .unwrap()
}
