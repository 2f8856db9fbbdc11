//! Joint training of the five networks with pooled sketch mixing.

mod checkpoint;
mod config;
mod optim;
mod run;
mod state;

pub use checkpoint::{
    config_fingerprint, load_checkpoint, save_checkpoint, CheckpointBundle, RngState,
};
pub use config::{lr_at, LrSchedule, MixThreshold, Strategy, TrainConfig};
pub use optim::{Adam, AdamState};
pub use run::{
    latest_checkpoint, prepare_state, run_training, sample_grid, steps_per_epoch, RunOptions,
    RunSummary, LATEST_POINTER, LOSS_LOG,
};
pub use state::{grad_norm, MixedSketches, StepObjectives, TrainState};
