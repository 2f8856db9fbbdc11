use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Below this many samples the covariance estimate is noisy and a warning is logged.
pub const FID_MIN_RELIABLE: usize = 100;

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 feature vectors for a covariance, got {n}"
            )));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::Shape("feature vectors differ in length".into()));
        }
        if n < FID_MIN_RELIABLE {
            log::warn!("FID from {n} samples; estimate is noisy below {FID_MIN_RELIABLE}");
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        Ok(Self { mean, cov, n })
    }
}

/// Square root of a symmetric positive semi-definite matrix. Negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut clamped = false;
    let roots = eig.eigenvalues.map(|v| {
        if v < 0.0 {
            clamped |= v < -1e-8 * eig.eigenvalues.amax().max(1.0);
            0.0
        } else {
            v.sqrt()
        }
    });
    if clamped {
        log::warn!("matrix square root: clamped significantly negative eigenvalues to 0");
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a S_b)^(1/2))`.
///
/// The cross term uses `sqrt(S_a) S_b sqrt(S_a)`, which is symmetric PSD and
/// has the same trace of square root as `S_a S_b`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    let diff = &a.mean - &b.mean;
    let root_a = psd_sqrt(&a.cov);
    let inner = &root_a * &b.cov * &root_a;
    let cross = psd_sqrt(&inner).trace();
    let d = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// FID between two feature sets.
pub fn compute_fid(generated: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    frechet_distance(
        &GaussianStats::from_features(generated)?,
        &GaussianStats::from_features(reference)?,
    )
}
