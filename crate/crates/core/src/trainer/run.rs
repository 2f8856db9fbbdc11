//! The epoch loop: batching, learning-rate schedule, loss log, sample grids
//! and periodic checkpoints.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use serde::Serialize;

use crate::dataset::{BatchLoader, DatasetManifest, Domain, LabeledImageBatch, SampledItem};
use crate::error::{Error, Result};
use crate::imageio::{image_grid, save_png, tensor_to_images};
use crate::losses::LossReport;
use crate::models::{ModelConfig, NetId};

use super::checkpoint::{config_fingerprint, load_checkpoint, save_checkpoint, CheckpointBundle};
use super::config::{lr_at, Strategy, TrainConfig};
use super::state::TrainState;

pub const LATEST_POINTER: &str = "latest";
pub const LOSS_LOG: &str = "losses.jsonl";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    pub flip: bool,
    pub cache: bool,
    /// Resume even when the checkpoint's fingerprint differs.
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: u64,
    pub epochs_completed: usize,
    pub last_checkpoint: Option<PathBuf>,
    pub last_report: Option<LossReport>,
    pub loss_log: PathBuf,
}

#[derive(Serialize)]
struct LogLine<'a> {
    step: u64,
    epoch: usize,
    lr: f64,
    #[serde(flatten)]
    report: &'a LossReport,
}

pub fn steps_per_epoch(manifest: &DatasetManifest, batch_size: usize) -> usize {
    manifest.n_photos().div_ceil(batch_size).max(1)
}

/// Path recorded in `out_dir/latest`, if any.
pub fn latest_checkpoint(out_dir: &Path) -> Option<PathBuf> {
    let name = fs::read_to_string(out_dir.join(LATEST_POINTER)).ok()?;
    Some(out_dir.join(name.trim()))
}

fn write_checkpoint(state: &TrainState, out_dir: &Path, name: &str) -> Result<PathBuf> {
    let path = out_dir.join(name);
    save_checkpoint(&CheckpointBundle::capture(state)?, &path)?;
    let pointer = out_dir.join(LATEST_POINTER);
    fs::write(&pointer, name)
        .map_err(|e| Error::io(format!("writing {}", pointer.display()), e))?;
    log::info!("saved checkpoint {}", path.display());
    Ok(path)
}

/// Rows: photo | synthesized sketch | reconstruction, then sketch | synthesized photo.
pub fn sample_grid(
    state: &TrainState,
    photo: &LabeledImageBatch,
    sketch: &LabeledImageBatch,
) -> Result<image::RgbImage> {
    let nets = &state.nets;
    let s_fake = nets.g_s.photo_to_sketch(&photo.images)?;
    let p_rec = nets.g_p.sketch_to_photo(&s_fake, &photo.label_tensor()?)?;
    let p_fake = nets
        .g_p
        .sketch_to_photo(&sketch.images, &sketch.label_tensor()?)?;
    let first = |t: &Tensor| -> Result<image::RgbImage> {
        Ok(tensor_to_images(&t.narrow(0, 0, 1)?)?.remove(0))
    };
    image_grid(&[
        vec![first(&photo.images)?, first(&s_fake)?, first(&p_rec)?],
        vec![first(&sketch.images)?, first(&p_fake)?],
    ])
}

fn open_domain_photos(manifest: &DatasetManifest) -> Vec<(PathBuf, u32)> {
    manifest
        .photo_items()
        .into_iter()
        .filter(|(_, l)| manifest.vocabulary.is_open(*l as usize))
        .collect()
}

/// With probability `1 - t`, replaces the sketch batch by sketches extracted
/// from open-domain photos with their photo labels.
fn pre_extracted_batch(
    state: &mut TrainState,
    loader: &BatchLoader,
    open_photos: &[(PathBuf, u32)],
    batch_size: usize,
) -> Result<Option<LabeledImageBatch>> {
    if !state.policy.should_substitute(&mut state.mix_rng) {
        return Ok(None);
    }
    let items: Vec<SampledItem> = (0..batch_size)
        .map(|_| {
            let (path, label) = &open_photos[state.data_rng.random_range(0..open_photos.len())];
            SampledItem {
                path: path.clone(),
                label: *label,
                flip: loader.flip && state.data_rng.random_bool(0.5),
            }
        })
        .collect();
    let photos = loader.batch(&items, Domain::Photo)?;
    Ok(Some(state.pre_extracted_sketches(&photos)?))
}

/// Builds a fresh state, or restores one from `opts.resume`.
pub fn prepare_state(
    manifest: &DatasetManifest,
    model: ModelConfig,
    config: &TrainConfig,
    opts: &RunOptions,
    device: &Device,
) -> Result<TrainState> {
    let vocabulary = manifest.vocabulary.clone();
    let mut state = match &opts.resume {
        Some(path) => {
            let expected = config_fingerprint(&model, &vocabulary, config.image_size)?;
            let mut bundle = load_checkpoint(path, device, Some(&expected), opts.force)?;
            bundle.train = config.clone();
            bundle.vocabulary = vocabulary;
            let state = bundle.into_train_state(device)?;
            log::info!("resumed from {} at step {}", path.display(), state.step);
            state
        }
        None => TrainState::new(model, config.clone(), vocabulary, device)?,
    };
    if config.strategy == Strategy::PreExtracted {
        let path = config.pre_extracted_checkpoint.as_ref().ok_or_else(|| {
            Error::Config("strategy pre_extracted needs train.pre_extracted_checkpoint".into())
        })?;
        let source = load_checkpoint(path, device, None, false)?;
        let nets = source.networks(device)?;
        if nets.store(NetId::GS).dtype() != DType::F32 {
            return Err(Error::Config("extractor checkpoint must be f32".into()));
        }
        state.set_pre_extractor(nets.g_s);
    }
    Ok(state)
}

/// Trains until the schedule (or `max_steps`) is exhausted.
pub fn run_training(
    manifest: &DatasetManifest,
    model: ModelConfig,
    config: &TrainConfig,
    opts: &RunOptions,
    device: &Device,
) -> Result<RunSummary> {
    fs::create_dir_all(&opts.out_dir)
        .map_err(|e| Error::io(format!("creating {}", opts.out_dir.display()), e))?;
    let samples_dir = opts.out_dir.join("samples");
    let mut state = prepare_state(manifest, model, config, opts, device)?;
    let loader = BatchLoader::new(config.image_size, opts.flip, opts.cache, DType::F32, device);
    let open_photos = open_domain_photos(manifest);
    if config.strategy == Strategy::PreExtracted && open_photos.is_empty() {
        return Err(Error::Config(
            "pre_extracted needs open-domain photos".into(),
        ));
    }

    let spe = steps_per_epoch(manifest, config.batch_size) as u64;
    let total = spe * config.epochs as u64;
    let limit = if config.max_steps == 0 {
        total
    } else {
        total.min(config.max_steps)
    };

    let loss_log = opts.out_dir.join(LOSS_LOG);
    let log_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&loss_log)
        .map_err(|e| Error::io(format!("opening {}", loss_log.display()), e))?;
    let mut log_out = BufWriter::new(log_file);

    let mut last_checkpoint = None;
    let mut last_report = None;
    while state.step < limit {
        let epoch = (state.step / spe) as usize + 1;
        let lr = lr_at(config, epoch)?;
        state.set_lr(lr);

        let (photo, mut sketch) =
            loader.next_training_batch(manifest, config.batch_size, &mut state.data_rng)?;
        let mut pre_extracted = false;
        if config.strategy == Strategy::PreExtracted {
            if let Some(batch) =
                pre_extracted_batch(&mut state, &loader, &open_photos, config.batch_size)?
            {
                sketch = batch;
                pre_extracted = true;
            }
        }
        let mut report = state.train_step(&photo, &sketch)?;
        report.substituted |= pre_extracted;

        serde_json::to_writer(
            &mut log_out,
            &LogLine {
                step: state.step,
                epoch,
                lr,
                report: &report,
            },
        )?;
        writeln!(log_out).map_err(|e| Error::io("writing loss log", e))?;
        if state.step % 100 == 0 {
            log::info!(
                "step {} epoch {epoch} lr {lr:.2e} g {:.4} pix {:.4} d_s {:.4} d_p {:.4} r {:.4}",
                state.step,
                report.g_total,
                report.pix,
                report.d_s,
                report.d_p,
                report.r
            );
        }
        if config.sample_every > 0 && state.step % config.sample_every == 0 {
            fs::create_dir_all(&samples_dir)
                .map_err(|e| Error::io(format!("creating {}", samples_dir.display()), e))?;
            let grid = sample_grid(&state, &photo, &sketch)?;
            save_png(
                &grid,
                &samples_dir.join(format!("step_{:07}.png", state.step)),
            )?;
        }
        last_report = Some(report);

        if state.step % spe == 0 {
            state.epoch = (state.step / spe) as usize;
            if state.epoch % config.checkpoint_every.max(1) == 0 || state.epoch == config.epochs {
                log_out
                    .flush()
                    .map_err(|e| Error::io("flushing loss log", e))?;
                last_checkpoint = Some(write_checkpoint(
                    &state,
                    &opts.out_dir,
                    &format!("ckpt_epoch_{}.bin", state.epoch),
                )?);
            }
        }
    }
    log_out
        .flush()
        .map_err(|e| Error::io("flushing loss log", e))?;
    if state.step % spe != 0 {
        last_checkpoint = Some(write_checkpoint(
            &state,
            &opts.out_dir,
            &format!("ckpt_step_{}.bin", state.step),
        )?);
    }
    Ok(RunSummary {
        steps: state.step,
        epochs_completed: state.epoch,
        last_checkpoint,
        last_report,
        loss_log,
    })
}
