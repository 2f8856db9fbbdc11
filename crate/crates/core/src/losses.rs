//! Objective terms for the generators, discriminators and classifier.
//!
//! Logits are raw; the logistic and softmax are applied here in
//! numerically stable form.

use std::collections::BTreeMap;

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the four generator terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_pix: f64,
    pub lambda_eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_p: 1.0,
            lambda_pix: 10.0,
            lambda_eta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_p", self.lambda_p),
            ("lambda_pix", self.lambda_pix),
            ("lambda_eta", self.lambda_eta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-step scalars, plus whether the pooled-sketch substitution fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g_s_adv: f64,
    pub g_p_adv: f64,
    pub pix: f64,
    pub eta: f64,
    pub g_total: f64,
    pub d_s: f64,
    pub d_p: f64,
    pub r: f64,
    pub substituted: bool,
}

impl LossReport {
    pub fn scalars(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("g_s_adv", self.g_s_adv),
            ("g_p_adv", self.g_p_adv),
            ("pix", self.pix),
            ("eta", self.eta),
            ("g_total", self.g_total),
            ("d_s", self.d_s),
            ("d_p", self.d_p),
            ("r", self.r),
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.scalars().values().all(|v| v.is_finite())
    }
}

/// `log(sigmoid(x)) = min(x, 0) - log(1 + exp(-|x|))`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    let neg_part = x.minimum(0.0)?;
    let softplus_tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((neg_part - softplus_tail)?)
}

/// Non-saturating generator loss `-mean(log sigmoid(logit))` over all patches.
pub fn gen_adversarial_loss(disc_logits_on_fake: &Tensor) -> Result<Tensor> {
    Ok(log_sigmoid(disc_logits_on_fake)?.mean_all()?.neg()?)
}

/// Mean absolute difference.
pub fn pixel_consistency_loss(reconstructed: &Tensor, original: &Tensor) -> Result<Tensor> {
    if reconstructed.shape() != original.shape() {
        return Err(Error::Argument(format!(
            "pixel loss shapes differ: {:?} vs {:?}",
            reconstructed.dims(),
            original.dims()
        )));
    }
    Ok((reconstructed - original)?.abs()?.mean_all()?)
}

fn check_labels(logits: &Tensor, labels: &Tensor) -> Result<(usize, usize)> {
    let (b, n) = logits.dims2()?;
    if labels.dims() != [b] {
        return Err(Error::Shape(format!(
            "{b} logit rows but labels have shape {:?}",
            labels.dims()
        )));
    }
    let values: Vec<u32> = labels.to_dtype(DType::U32)?.to_vec1()?;
    if let Some(bad) = values.iter().find(|&&l| l as usize >= n) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    Ok((b, n))
}

/// Focal loss `mean(-(1 - p_t)^gamma * log p_t)`; `gamma = 0` is cross-entropy.
pub fn focal_classification_loss(
    class_logits: &Tensor,
    labels: &Tensor,
    gamma: f64,
) -> Result<Tensor> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Argument(format!(
            "focal gamma must be >= 0, got {gamma}"
        )));
    }
    let (b, _) = check_labels(class_logits, labels)?;
    let log_probs = candle_nn::ops::log_softmax(class_logits, D::Minus1)?;
    let idx = labels.to_dtype(DType::U32)?.reshape((b, 1))?;
    let log_pt = log_probs.gather(&idx, 1)?.squeeze(1)?;
    let per_item = if gamma == 0.0 {
        log_pt.neg()?
    } else {
        // clamp keeps the pow gradient finite when p_t rounds to exactly 1
        let one_minus = log_pt.exp()?.affine(-1.0, 1.0)?.clamp(1e-12, 1.0)?;
        let weight = one_minus.powf(gamma)?;
        (weight * log_pt)?.neg()?
    };
    Ok(per_item.mean_all()?)
}

/// `lambda_s * g_s_adv + lambda_p * g_p_adv + lambda_pix * pix + lambda_eta * eta`.
pub fn generator_total_loss(
    weights: &LossWeights,
    g_s_adv: &Tensor,
    g_p_adv: &Tensor,
    pix: &Tensor,
    eta: &Tensor,
) -> Result<Tensor> {
    let total = ((g_s_adv * weights.lambda_s)? + (g_p_adv * weights.lambda_p)?)?;
    let total = (total + (pix * weights.lambda_pix)?)?;
    Ok((total + (eta * weights.lambda_eta)?)?)
}

/// Binary cross-entropy discriminator loss
/// `-mean(log sigmoid(real)) - mean(log(1 - sigmoid(fake)))`.
///
/// Callers pass logits computed on detached fakes.
pub fn discriminator_loss(logits_real: &Tensor, logits_fake: &Tensor) -> Result<Tensor> {
    let real = log_sigmoid(logits_real)?.mean_all()?;
    let fake = log_sigmoid(&logits_fake.neg()?)?.mean_all()?;
    Ok((real + fake)?.neg()?)
}

/// Focal loss on real pairs plus focal loss on fake pairs (each a batch mean).
/// An empty fake batch contributes nothing.
pub fn classifier_update_loss(
    logits_real: &Tensor,
    labels_real: &Tensor,
    logits_fake: &Tensor,
    labels_fake: &Tensor,
    gamma: f64,
) -> Result<Tensor> {
    let real = focal_classification_loss(logits_real, labels_real, gamma)?;
    if logits_fake.dim(0)? == 0 {
        return Ok(real);
    }
    let fake = focal_classification_loss(logits_fake, labels_fake, gamma)?;
    Ok((real + fake)?)
}

/// Scalar value of a 0-d tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
