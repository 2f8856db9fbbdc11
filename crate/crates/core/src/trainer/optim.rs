use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam over one network's parameters. Parameters without a gradient in a
/// given step are left untouched, moments included.
#[derive(Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    params: Vec<(String, Var, Tensor, Tensor)>,
}

/// Serializable optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: BTreeMap<String, Tensor>,
    pub second_moment: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, betas: (f64, f64)) -> Result<Self> {
        let params = store
            .named_vars()
            .into_iter()
            .map(|(name, var)| {
                let m = var.zeros_like()?;
                let v = var.zeros_like()?;
                Ok((name, var, m, v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            step: 0,
            params,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (_, var, m, v) in self.params.iter_mut() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            *m = ((&*m * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            *v = ((&*v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&*m / bc1)?;
            let v_hat = (&*v / bc2)?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let next = (var.as_tensor().detach() - (update * self.lr)?)?;
            var.set(&next)?;
        }
        Ok(())
    }

    pub fn state(&self) -> Result<AdamState> {
        let mut first_moment = BTreeMap::new();
        let mut second_moment = BTreeMap::new();
        for (name, _, m, v) in &self.params {
            first_moment.insert(name.clone(), m.copy()?);
            second_moment.insert(name.clone(), v.copy()?);
        }
        Ok(AdamState {
            step: self.step,
            first_moment,
            second_moment,
        })
    }

    pub fn load_state(&mut self, state: &AdamState) -> Result<()> {
        for (name, var, m, v) in self.params.iter_mut() {
            let (Some(sm), Some(sv)) =
                (state.first_moment.get(name), state.second_moment.get(name))
            else {
                return Err(Error::integrity(
                    format!("optimizer.{name}"),
                    "missing moment tensors",
                ));
            };
            if sm.shape() != var.shape() || sv.shape() != var.shape() {
                return Err(Error::integrity(
                    format!("optimizer.{name}"),
                    "moment shape does not match parameter",
                ));
            }
            *m = sm.to_dtype(var.dtype())?;
            *v = sv.to_dtype(var.dtype())?;
        }
        self.step = state.step;
        Ok(())
    }
}
