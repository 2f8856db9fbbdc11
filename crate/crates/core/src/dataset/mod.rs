//! Unpaired sketch/photo corpora: class vocabulary, directory manifest,
//! image preprocessing and minibatch sampling.

mod batch;
mod manifest;
mod preprocess;
pub mod toy;
mod vocab;

pub use batch::{sample_training_items, BatchLoader, LabeledImageBatch, SampledItem};
pub use manifest::{
    class_dirs, infer_class_names, load_dataset_manifest, ClassCounts, DatasetManifest, PHOTOS_DIR,
    SKETCHES_DIR, TEST_SKETCHES_DIR,
};
pub use preprocess::{
    array_to_rgb, decode_image, decode_image_bytes, load_preprocessed, preprocess_image, Domain,
    ImageArray,
};
pub use vocab::ClassVocabulary;
