use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassVocabulary;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::pool::{MixPolicy, DEFAULT_POOL_CAPACITY, DEFAULT_SWAP_LIKELIHOOD};

/// The three training arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Pooled synthesized sketches randomly replace the real sketch batch
    /// for the generator update.
    RandomMixed,
    /// Plain joint training; open-domain classes only see the cycle term.
    None,
    /// Open-domain sketches pre-extracted by a frozen photo-to-sketch network
    /// are mixed into the real sketch stream for every network.
    PreExtracted,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_mixed" => Ok(Strategy::RandomMixed),
            "none" => Ok(Strategy::None),
            "pre_extracted" => Ok(Strategy::PreExtracted),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected random_mixed, none or pre_extracted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Constant for the first half of the epochs, then linear decay to zero.
    Linear,
    /// Constant for the first half, halved for the second half.
    Step,
}

impl std::str::FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LrSchedule::Linear),
            "step" => Ok(LrSchedule::Step),
            other => Err(Error::Config(format!(
                "unknown lr schedule `{other}` (expected linear or step)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixThreshold {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for MixThreshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(MixThreshold::Auto);
        }
        let t: f64 = s.parse().map_err(|_| {
            Error::Config(format!(
                "mix threshold must be `auto` or a number, got `{s}`"
            ))
        })?;
        MixPolicy::new(t)?;
        Ok(MixThreshold::Fixed(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub lr_schedule: LrSchedule,
    pub image_size: usize,
    pub weights: LossWeights,
    pub focal_gamma: f64,
    pub mix_threshold: MixThreshold,
    pub pool_capacity: usize,
    pub swap_likelihood: f64,
    pub strategy: Strategy,
    pub seed: u64,
    /// Checkpoint whose photo-to-sketch network feeds the `pre_extracted` arm.
    pub pre_extracted_checkpoint: Option<PathBuf>,
    pub sample_every: u64,
    pub checkpoint_every: usize,
    /// Stop after this many steps (0 = run the whole schedule).
    pub max_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1,
            lr: 2e-4,
            adam_betas: (0.5, 0.999),
            lr_schedule: LrSchedule::Linear,
            image_size: 256,
            weights: LossWeights::default(),
            focal_gamma: 2.0,
            mix_threshold: MixThreshold::Auto,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            swap_likelihood: DEFAULT_SWAP_LIKELIHOOD,
            strategy: Strategy::RandomMixed,
            seed: 0,
            pre_extracted_checkpoint: None,
            sample_every: 500,
            checkpoint_every: 5,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "train.lr must be > 0, got {}",
                self.lr
            )));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.image_size == 0 || self.image_size % 4 != 0 {
            return Err(Error::Config(format!(
                "image size must be a positive multiple of 4, got {}",
                self.image_size
            )));
        }
        if !(self.focal_gamma.is_finite() && self.focal_gamma >= 0.0) {
            return Err(Error::Config("train.focal_gamma must be >= 0".into()));
        }
        if self.pool_capacity == 0 {
            return Err(Error::Config("train.pool_capacity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.swap_likelihood) {
            return Err(Error::Config(
                "train.swap_likelihood must be in [0, 1]".into(),
            ));
        }
        if self.strategy == Strategy::PreExtracted && self.pre_extracted_checkpoint.is_none() {
            return Err(Error::Config(
                "strategy pre_extracted needs train.pre_extracted_checkpoint".into(),
            ));
        }
        self.weights.validate()
    }

    /// Resolves `auto` against the vocabulary.
    pub fn threshold(&self, vocabulary: &ClassVocabulary) -> Result<f64> {
        match self.mix_threshold {
            MixThreshold::Auto => MixPolicy::default_threshold(vocabulary),
            MixThreshold::Fixed(t) => Ok(t),
        }
    }
}

/// Learning rate for a 1-based epoch.
///
/// The first `epochs / 2` epochs use the base rate; afterwards `Linear`
/// decays to exactly 0 at the final epoch and `Step` halves the rate.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch == 0 || epoch > config.epochs {
        return Err(Error::Argument(format!(
            "epoch {epoch} outside 1..={}",
            config.epochs
        )));
    }
    let half = config.epochs / 2;
    if epoch <= half {
        return Ok(config.lr);
    }
    Ok(match config.lr_schedule {
        LrSchedule::Step => config.lr * 0.5,
        LrSchedule::Linear => {
            let remaining = (config.epochs - epoch) as f64;
            config.lr * remaining / (config.epochs - half) as f64
        }
    })
}
