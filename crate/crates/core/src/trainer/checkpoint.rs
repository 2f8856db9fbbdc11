//! Full training-state checkpoints.
//!
//! One archive holds the parameters of all five networks, the Adam moments,
//! the pool contents, every RNG stream, the counters and the configuration.
//! Restoring and continuing is bit-identical to never having stopped.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{sha256_hex, TensorArchive};
use crate::dataset::ClassVocabulary;
use crate::error::{Error, Result};
use crate::models::{ModelConfig, NetId, Networks};
use crate::pool::PooledSketches;

use super::config::TrainConfig;
use super::optim::AdamState;
use super::state::TrainState;

const FORMAT: &str = "s2p-checkpoint/1";

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal, since JSON numbers cannot carry a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |r: &str| Error::integrity("rng", r.to_string());
        let seed: [u8; 32] = hex::decode(&self.seed)
            .map_err(|_| bad("seed is not hex"))?
            .try_into()
            .map_err(|_| bad("seed must be 32 bytes"))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| bad("bad word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    fingerprint: String,
    epoch: usize,
    step: u64,
    model: ModelConfig,
    train: TrainConfig,
    vocabulary: ClassVocabulary,
    optimizer_steps: BTreeMap<String, u64>,
    rng_mix: RngState,
    rng_data: RngState,
    rng_pool: RngState,
    pool_len: usize,
}

/// In-memory form of a checkpoint file.
#[derive(Debug, Clone)]
pub struct CheckpointBundle {
    pub epoch: usize,
    pub step: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocabulary: ClassVocabulary,
    pub fingerprint: String,
    pub params: BTreeMap<NetId, BTreeMap<String, Tensor>>,
    pub optimizers: BTreeMap<NetId, AdamState>,
    pub rng_mix: RngState,
    pub rng_data: RngState,
    pub rng_pool: RngState,
    pub pool: Vec<PooledSketches>,
}

/// Hash of everything that fixes parameter shapes and label meaning.
pub fn config_fingerprint(
    model: &ModelConfig,
    vocabulary: &ClassVocabulary,
    image_size: usize,
) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::json!({
        "model": model,
        "vocabulary": vocabulary,
        "image_size": image_size,
    }))?;
    Ok(sha256_hex(&canonical))
}

fn net_from_key(key: &str) -> Option<NetId> {
    NetId::ALL.into_iter().find(|id| id.key() == key)
}

impl CheckpointBundle {
    pub fn capture(state: &TrainState) -> Result<Self> {
        let mut params = BTreeMap::new();
        let mut optimizers = BTreeMap::new();
        for id in NetId::ALL {
            params.insert(id, state.nets.store(id).snapshot()?);
            optimizers.insert(id, state.optimizer(id).state()?);
        }
        Ok(Self {
            epoch: state.epoch,
            step: state.step,
            model: state.model,
            train: state.config.clone(),
            vocabulary: state.vocabulary.clone(),
            fingerprint: config_fingerprint(
                &state.model,
                &state.vocabulary,
                state.config.image_size,
            )?,
            params,
            optimizers,
            rng_mix: RngState::capture(&state.mix_rng),
            rng_data: RngState::capture(&state.data_rng),
            rng_pool: RngState::capture(state.pool.rng()),
            pool: state.pool.entries().to_vec(),
        })
    }

    /// Rebuilds the full training state for resuming.
    pub fn into_train_state(self, device: &Device) -> Result<TrainState> {
        let mut state = TrainState::new(
            self.model,
            self.train.clone(),
            self.vocabulary.clone(),
            device,
        )?;
        for id in NetId::ALL {
            state.nets.store(id).load(&self.params[&id])?;
            state.optimizer_mut(id).load_state(&self.optimizers[&id])?;
        }
        state.pool.restore(self.pool, self.rng_pool.restore()?)?;
        state.mix_rng = self.rng_mix.restore()?;
        state.data_rng = self.rng_data.restore()?;
        state.epoch = self.epoch;
        state.step = self.step;
        Ok(state)
    }

    /// Builds the networks with the stored weights, for inference.
    pub fn networks(&self, device: &Device) -> Result<Networks> {
        let nets = Networks::new(self.model, self.vocabulary.len(), 0, DType::F32, device)?;
        for id in NetId::ALL {
            nets.store(id).load(&self.params[&id])?;
        }
        Ok(nets)
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let header = Header {
            format: FORMAT.to_string(),
            fingerprint: self.fingerprint.clone(),
            epoch: self.epoch,
            step: self.step,
            model: self.model,
            train: self.train.clone(),
            vocabulary: self.vocabulary.clone(),
            optimizer_steps: self
                .optimizers
                .iter()
                .map(|(id, s)| (id.key().to_string(), s.step))
                .collect(),
            rng_mix: self.rng_mix.clone(),
            rng_data: self.rng_data.clone(),
            rng_pool: self.rng_pool.clone(),
            pool_len: self.pool.len(),
        };
        let mut archive = TensorArchive::new(serde_json::to_value(&header)?);
        for (id, tensors) in &self.params {
            for (name, t) in tensors {
                archive
                    .tensors
                    .insert(format!("params.{}.{name}", id.key()), t.clone());
            }
        }
        for (id, st) in &self.optimizers {
            for (name, t) in &st.first_moment {
                archive
                    .tensors
                    .insert(format!("adam_m.{}.{name}", id.key()), t.clone());
            }
            for (name, t) in &st.second_moment {
                archive
                    .tensors
                    .insert(format!("adam_v.{}.{name}", id.key()), t.clone());
            }
        }
        for (i, entry) in self.pool.iter().enumerate() {
            archive
                .tensors
                .insert(format!("pool.{i:04}.sketches"), entry.sketches.clone());
            archive.tensors.insert(
                format!("pool.{i:04}.labels"),
                Tensor::new(entry.labels.as_slice(), entry.sketches.device())?,
            );
        }
        Ok(archive)
    }

    pub fn from_archive(archive: TensorArchive) -> Result<Self> {
        let header: Header = serde_json::from_value(archive.meta)
            .map_err(|e| Error::integrity("header", e.to_string()))?;
        if header.format != FORMAT {
            return Err(Error::integrity(
                "format",
                format!("unsupported checkpoint format `{}`", header.format),
            ));
        }
        let recomputed =
            config_fingerprint(&header.model, &header.vocabulary, header.train.image_size)?;
        if recomputed != header.fingerprint {
            return Err(Error::integrity(
                "fingerprint",
                "stored fingerprint does not match stored configuration",
            ));
        }

        let mut params: BTreeMap<NetId, BTreeMap<String, Tensor>> = BTreeMap::new();
        let mut moments: BTreeMap<NetId, (BTreeMap<String, Tensor>, BTreeMap<String, Tensor>)> =
            BTreeMap::new();
        let mut pool_sketches = BTreeMap::new();
        let mut pool_labels = BTreeMap::new();
        for (full, t) in archive.tensors {
            let (kind, rest) = full
                .split_once('.')
                .ok_or_else(|| Error::integrity(full.clone(), "unrecognised tensor name"))?;
            let (scope, name) = rest
                .split_once('.')
                .ok_or_else(|| Error::integrity(full.clone(), "unrecognised tensor name"))?;
            if kind == "pool" {
                let idx: usize = scope
                    .parse()
                    .map_err(|_| Error::integrity(full.clone(), "bad pool index"))?;
                match name {
                    "sketches" => pool_sketches.insert(idx, t),
                    "labels" => pool_labels.insert(idx, t),
                    _ => return Err(Error::integrity(full, "unrecognised pool tensor")),
                };
                continue;
            }
            let id = net_from_key(scope)
                .ok_or_else(|| Error::integrity(full.clone(), "unknown network"))?;
            match kind {
                "params" => {
                    params.entry(id).or_default().insert(name.to_string(), t);
                }
                "adam_m" => {
                    moments.entry(id).or_default().0.insert(name.to_string(), t);
                }
                "adam_v" => {
                    moments.entry(id).or_default().1.insert(name.to_string(), t);
                }
                _ => return Err(Error::integrity(full, "unrecognised tensor group")),
            }
        }

        let mut optimizers = BTreeMap::new();
        for id in NetId::ALL {
            if !params.contains_key(&id) {
                return Err(Error::integrity(
                    format!("params.{}", id.key()),
                    "network missing from checkpoint",
                ));
            }
            let (m, v) = moments.remove(&id).unwrap_or_default();
            let step = header.optimizer_steps.get(id.key()).copied().unwrap_or(0);
            optimizers.insert(
                id,
                AdamState {
                    step,
                    first_moment: m,
                    second_moment: v,
                },
            );
        }

        check_vocabulary_shapes(&header.vocabulary, &params)?;

        if pool_sketches.len() != header.pool_len || pool_labels.len() != header.pool_len {
            return Err(Error::integrity(
                "pool",
                "pool entry count does not match header",
            ));
        }
        let mut pool = Vec::with_capacity(header.pool_len);
        for i in 0..header.pool_len {
            let (Some(s), Some(l)) = (pool_sketches.remove(&i), pool_labels.remove(&i)) else {
                return Err(Error::integrity("pool", format!("entry {i} missing")));
            };
            pool.push(PooledSketches::new(s, l.to_vec1::<u32>()?)?);
        }

        Ok(Self {
            epoch: header.epoch,
            step: header.step,
            model: header.model,
            train: header.train,
            vocabulary: header.vocabulary,
            fingerprint: header.fingerprint,
            params,
            optimizers,
            rng_mix: header.rng_mix,
            rng_data: header.rng_data,
            rng_pool: header.rng_pool,
            pool,
        })
    }
}

/// Label-indexed tensors must have one row per vocabulary class.
fn check_vocabulary_shapes(
    vocabulary: &ClassVocabulary,
    params: &BTreeMap<NetId, BTreeMap<String, Tensor>>,
) -> Result<()> {
    let n = vocabulary.len();
    for (id, name) in [
        (NetId::GP, "label.table.weight"),
        (NetId::R, "fc.weight"),
        (NetId::R, "fc.bias"),
    ] {
        let Some(t) = params.get(&id).and_then(|p| p.get(name)) else {
            continue;
        };
        let rows = t.dim(0)?;
        if rows != n {
            return Err(Error::integrity(
                "vocabulary",
                format!(
                    "{n} classes in vocabulary but {}.{name} has {rows} rows",
                    id.key()
                ),
            ));
        }
    }
    Ok(())
}

pub fn save_checkpoint(bundle: &CheckpointBundle, path: &Path) -> Result<()> {
    bundle.to_archive()?.save(path)
}

/// Loads and validates a checkpoint. A fingerprint differing from `expected`
/// is an error unless `force` is set, in which case it is only logged.
pub fn load_checkpoint(
    path: &Path,
    device: &Device,
    expected: Option<&str>,
    force: bool,
) -> Result<CheckpointBundle> {
    let bundle = CheckpointBundle::from_archive(TensorArchive::load(path, device)?)?;
    if let Some(expected) = expected {
        if expected != bundle.fingerprint {
            if !force {
                return Err(Error::Fingerprint {
                    expected: expected.to_string(),
                    found: bundle.fingerprint.clone(),
                });
            }
            log::warn!(
                "loading {} despite fingerprint mismatch ({} != {expected})",
                path.display(),
                bundle.fingerprint
            );
        }
    }
    Ok(bundle)
}
