//! Flat `key = value` run configuration.
//!
//! Files may group keys under `[section]` headers (`[train]` + `lr = ...` is
//! the same as `train.lr = ...`) and use `#` comments. Unknown keys are
//! rejected with the closest known key as a suggestion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataset::{infer_class_names, ClassVocabulary};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn k(key: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, default, help }
}

pub const KEYS: &[KeySpec] = &[
    k(
        "data.root",
        "",
        "dataset root holding photos/, sketches/ and test_sketches/",
    ),
    k(
        "data.classes",
        "",
        "comma-separated class names; empty = photo subdirectories in sorted order",
    ),
    k(
        "data.open_domain",
        "",
        "comma-separated classes whose training sketches are withheld",
    ),
    k(
        "data.image_size",
        "256",
        "square training resolution (multiple of 4)",
    ),
    k("data.flip", "true", "random horizontal flips"),
    k("data.cache", "false", "keep decoded images in memory"),
    k("model.base_width", "64", "generator stem width"),
    k("model.n_blocks", "9", "residual blocks per generator"),
    k("model.embed_dim", "64", "label embedding width"),
    k(
        "model.d_layers",
        "5",
        "convolutions per patch discriminator",
    ),
    k(
        "model.d_base_width",
        "64",
        "discriminator first-layer width",
    ),
    k(
        "model.classifier",
        "simple_cnn",
        "classifier backbone: simple_cnn or hrnet_small",
    ),
    k("model.classifier_width", "32", "classifier base width"),
    k("train.epochs", "200", "number of epochs"),
    k("train.batch_size", "1", "minibatch size"),
    k("train.lr", "0.0002", "Adam learning rate"),
    k("train.beta1", "0.5", "Adam beta1"),
    k("train.beta2", "0.999", "Adam beta2"),
    k(
        "train.lr_schedule",
        "linear",
        "linear (decay to 0 over the second half) or step (halve)",
    ),
    k(
        "train.lambda_s",
        "1",
        "weight of the sketch adversarial term",
    ),
    k(
        "train.lambda_p",
        "1",
        "weight of the photo adversarial term",
    ),
    k(
        "train.lambda_pix",
        "10",
        "weight of the photo reconstruction term",
    ),
    k(
        "train.lambda_eta",
        "1",
        "weight of the label classification term",
    ),
    k("train.focal_gamma", "2", "focal loss focusing parameter"),
    k(
        "train.mix_threshold",
        "auto",
        "substitution threshold in [0,1]; auto = in-domain class share",
    ),
    k("train.pool_capacity", "50", "stored sketch batches"),
    k(
        "train.swap_likelihood",
        "0.5",
        "probability that a full pool answers with a stored batch",
    ),
    k(
        "train.strategy",
        "random_mixed",
        "random_mixed, none or pre_extracted",
    ),
    k(
        "train.seed",
        "0",
        "seed for initialisation, sampling and mixing",
    ),
    k(
        "train.pre_extracted_checkpoint",
        "",
        "checkpoint supplying the frozen extractor for pre_extracted",
    ),
    k(
        "train.sample_every",
        "500",
        "steps between sample grids (0 = never)",
    ),
    k("train.checkpoint_every", "5", "epochs between checkpoints"),
    k(
        "train.max_steps",
        "0",
        "stop after this many steps (0 = full schedule)",
    ),
];

/// Raw key/value settings layered over the registry defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

/// Fully parsed settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data_root: Option<PathBuf>,
    pub classes: Vec<String>,
    pub open_domain: Vec<String>,
    pub flip: bool,
    pub cache: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn spec(key: &str) -> Result<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key).ok_or_else(|| {
        let best = KEYS
            .iter()
            .map(|s| (strsim::jaro_winkler(key, s.key), s.key))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .filter(|(score, _)| *score > 0.7);
        match best {
            Some((_, near)) => Error::Config(format!(
                "unknown config key `{key}` (did you mean `{near}`?)"
            )),
            None => Error::Config(format!("unknown config key `{key}`")),
        }
    })
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let key = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.set(&key, value.trim().trim_matches('"'))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        spec(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        let s = spec(key)?;
        Ok(self
            .values
            .get(key)
            .map(String::as_str)
            .unwrap_or(s.default))
    }

    /// Every key with its effective value.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|s| {
                (
                    s.key.to_string(),
                    self.get(s.key).unwrap_or(s.default).to_string(),
                )
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.effective()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
    }

    fn parsed<T, E>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr<Err = E>,
        E: std::fmt::Display,
    {
        let v = self.get(key)?;
        v.parse()
            .map_err(|e| Error::Config(format!("`{key}`: {e}")))
    }

    pub fn settings(&self) -> Result<Settings> {
        let path = |key: &str| -> Result<Option<PathBuf>> {
            let v = self.get(key)?;
            Ok((!v.is_empty()).then(|| PathBuf::from(v)))
        };
        let model = ModelConfig {
            base_width: self.typed("model.base_width")?,
            n_blocks: self.typed("model.n_blocks")?,
            embed_dim: self.typed("model.embed_dim")?,
            d_layers: self.typed("model.d_layers")?,
            d_base_width: self.typed("model.d_base_width")?,
            classifier: self.parsed("model.classifier")?,
            classifier_width: self.typed("model.classifier_width")?,
        };
        let train = TrainConfig {
            epochs: self.typed("train.epochs")?,
            batch_size: self.typed("train.batch_size")?,
            lr: self.typed("train.lr")?,
            adam_betas: (self.typed("train.beta1")?, self.typed("train.beta2")?),
            lr_schedule: self.parsed("train.lr_schedule")?,
            image_size: self.typed("data.image_size")?,
            weights: LossWeights {
                lambda_s: self.typed("train.lambda_s")?,
                lambda_p: self.typed("train.lambda_p")?,
                lambda_pix: self.typed("train.lambda_pix")?,
                lambda_eta: self.typed("train.lambda_eta")?,
            },
            focal_gamma: self.typed("train.focal_gamma")?,
            mix_threshold: self.parsed("train.mix_threshold")?,
            pool_capacity: self.typed("train.pool_capacity")?,
            swap_likelihood: self.typed("train.swap_likelihood")?,
            strategy: self.parsed("train.strategy")?,
            seed: self.typed("train.seed")?,
            pre_extracted_checkpoint: path("train.pre_extracted_checkpoint")?,
            sample_every: self.typed("train.sample_every")?,
            checkpoint_every: self.typed("train.checkpoint_every")?,
            max_steps: self.typed("train.max_steps")?,
        };
        train.validate()?;
        Ok(Settings {
            data_root: path("data.root")?,
            classes: list(self.get("data.classes")?),
            open_domain: list(self.get("data.open_domain")?),
            flip: self.typed("data.flip")?,
            cache: self.typed("data.cache")?,
            model,
            train,
        })
    }
}

impl Settings {
    pub fn require_root(&self) -> Result<&Path> {
        self.data_root
            .as_deref()
            .ok_or_else(|| Error::Config("data.root is not set".into()))
    }

    /// Vocabulary from `data.classes` or, when empty, the photo directories.
    pub fn vocabulary(&self) -> Result<ClassVocabulary> {
        let names = if self.classes.is_empty() {
            infer_class_names(self.require_root()?)?
        } else {
            self.classes.clone()
        };
        ClassVocabulary::new(names, &self.open_domain)
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|s| s.key.len()).max().unwrap_or(0);
    KEYS.iter()
        .map(|s| {
            let default = if s.default.is_empty() {
                "(unset)"
            } else {
                s.default
            };
            format!("  {:width$}  {}  [default: {default}]\n", s.key, s.help)
        })
        .collect()
}
