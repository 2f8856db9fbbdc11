use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Parameter initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Const(f64),
}

impl Init {
    /// Default init for conv weights in this model family.
    pub const CONV: Init = Init::Normal {
        mean: 0.0,
        std: 0.02,
    };

    pub const ZEROS: Init = Init::Const(0.0);

    /// Fan-in scaled uniform init used by fully-connected layers.
    pub fn fan_in(fan_in: usize) -> Init {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Init::Uniform {
            lo: -bound,
            hi: bound,
        }
    }
}

struct Inner {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

/// Named, seeded parameter container for one network.
///
/// Candle cannot seed its CPU generator, so all initial values are drawn
/// from a ChaCha stream owned by the store. Cloning yields a handle to the
/// same storage; `pp` scopes names with a dotted prefix.
#[derive(Clone)]
pub struct ParamStore {
    inner: Arc<Mutex<Inner>>,
    prefix: String,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.lock();
        f.debug_struct("ParamStore")
            .field("prefix", &self.prefix)
            .field("n_vars", &inner.vars.len())
            .field("dtype", &inner.dtype)
            .finish()
    }
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                vars: BTreeMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                dtype,
                device: device.clone(),
            })),
            prefix: String::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().expect("parameter store poisoned")
    }

    pub fn pp(&self, name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Self {
            inner: self.inner.clone(),
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn dtype(&self) -> DType {
        self.lock().dtype
    }

    pub fn device(&self) -> Device {
        self.lock().device.clone()
    }

    /// Returns the named parameter, creating it with `init` on first use.
    pub fn get(&self, shape: impl Into<Shape>, name: &str, init: Init) -> Result<Tensor> {
        let shape = shape.into();
        let full = self.full_name(name);
        let mut inner = self.lock();
        if let Some(var) = inner.vars.get(&full) {
            if var.shape() != &shape {
                return Err(Error::Shape(format!(
                    "parameter {full} exists with shape {:?}, requested {:?}",
                    var.shape(),
                    shape
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        let n = shape.elem_count();
        let values: Vec<f64> = match init {
            Init::Const(v) => vec![v; n],
            Init::Normal { mean, std } => {
                let normal = Normal::new(mean, std)
                    .map_err(|e| Error::Argument(format!("bad normal init: {e}")))?;
                (0..n).map(|_| normal.sample(&mut inner.rng)).collect()
            }
            Init::Uniform { lo, hi } => (0..n).map(|_| inner.rng.random_range(lo..hi)).collect(),
        };
        let tensor = Tensor::from_vec(values, shape, &inner.device)?.to_dtype(inner.dtype)?;
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        inner.vars.insert(full, var);
        Ok(out)
    }

    /// All variables in name order.
    pub fn named_vars(&self) -> Vec<(String, Var)> {
        self.lock()
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.lock().vars.values().cloned().collect()
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.lock().vars.get(name).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_elements(&self) -> usize {
        self.lock().vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites every parameter from `tensors`; names and shapes must match exactly.
    pub fn load(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let inner = self.lock();
        for (name, var) in inner.vars.iter() {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::integrity(name.clone(), "missing tensor"))?;
            if t.shape() != var.shape() {
                return Err(Error::integrity(
                    name.clone(),
                    format!("shape {:?} does not match {:?}", t.shape(), var.shape()),
                ));
            }
            var.set(&t.to_dtype(inner.dtype)?)?;
        }
        Ok(())
    }

    /// Deep copy of all current values.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        let inner = self.lock();
        let mut out = BTreeMap::new();
        for (name, var) in inner.vars.iter() {
            out.insert(name.clone(), var.as_tensor().copy()?);
        }
        Ok(out)
    }
}
