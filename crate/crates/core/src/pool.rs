//! History buffer of synthesized `(sketch, label)` minibatches and the
//! random-mixed substitution rule that decides when the generator sees a
//! pooled pair in place of the real sketch batch.

use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ClassVocabulary;
use crate::error::{Error, Result};

pub const DEFAULT_POOL_CAPACITY: usize = 50;
pub const DEFAULT_SWAP_LIKELIHOOD: f64 = 0.5;

/// A stored sketch minibatch with its labels; the two never separate.
#[derive(Debug, Clone)]
pub struct PooledSketches {
    pub sketches: Tensor,
    pub labels: Vec<u32>,
}

impl PooledSketches {
    pub fn new(sketches: Tensor, labels: Vec<u32>) -> Result<Self> {
        let b = sketches.dim(0)?;
        if b != labels.len() {
            return Err(Error::Shape(format!(
                "{b} pooled sketches but {} labels",
                labels.len()
            )));
        }
        Ok(Self { sketches, labels })
    }

    pub fn label_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::new(self.labels.as_slice(), self.sketches.device())?)
    }
}

/// Bounded buffer of past synthesized sketch batches.
#[derive(Debug, Clone)]
pub struct SketchPool {
    capacity: usize,
    swap_likelihood: f64,
    entries: Vec<PooledSketches>,
    rng: ChaCha8Rng,
}

impl SketchPool {
    pub fn new(capacity: usize, swap_likelihood: f64, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("pool capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&swap_likelihood) {
            return Err(Error::Config(format!(
                "swap likelihood must be in [0, 1], got {swap_likelihood}"
            )));
        }
        Ok(Self {
            capacity,
            swap_likelihood,
            entries: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn swap_likelihood(&self) -> f64 {
        self.swap_likelihood
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[PooledSketches] {
        &self.entries
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Restores contents and generator state, e.g. when resuming.
    pub fn restore(&mut self, entries: Vec<PooledSketches>, rng: ChaCha8Rng) -> Result<()> {
        if entries.len() > self.capacity {
            return Err(Error::integrity(
                "pool",
                format!(
                    "{} entries exceed capacity {}",
                    entries.len(),
                    self.capacity
                ),
            ));
        }
        self.entries = entries;
        self.rng = rng;
        Ok(())
    }

    /// Filling phase: store and return `fresh`. Once full: with probability
    /// `swap_likelihood` return a uniformly chosen stored pair and put `fresh`
    /// in its slot, otherwise return `fresh` and leave the pool unchanged.
    ///
    /// Stored sketches are detached copies, never part of a gradient graph.
    pub fn query(&mut self, fresh: PooledSketches) -> Result<PooledSketches> {
        let fresh = PooledSketches {
            sketches: fresh.sketches.detach().copy()?,
            labels: fresh.labels,
        };
        if !self.is_full() {
            self.entries.push(fresh.clone());
            return Ok(fresh);
        }
        if self.rng.random::<f64>() < self.swap_likelihood {
            let slot = self.rng.random_range(0..self.entries.len());
            Ok(std::mem::replace(&mut self.entries[slot], fresh))
        } else {
            Ok(fresh)
        }
    }
}

/// Substitution threshold `t`: substitution fires when `u ~ U(0, 1)` exceeds `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixPolicy {
    threshold: f64,
}

impl MixPolicy {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!(
                "mix threshold must be in [0, 1], got {threshold}"
            )));
        }
        Ok(Self { threshold })
    }

    /// `t = n_in_domain / n_total`, so substitution happens with the
    /// open-domain share of classes.
    pub fn default_threshold(vocabulary: &ClassVocabulary) -> Result<f64> {
        if vocabulary.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        Ok(vocabulary.n_in() as f64 / vocabulary.len() as f64)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn should_substitute<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let u: f64 = rng.random();
        self.threshold < u
    }
}
