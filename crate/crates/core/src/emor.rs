//! Low-dimensional response-curve model: mean curve plus PCA eigenvectors.
//!
//! A curve is reconstructed as `H0 + sum_i theta_i * H_i`, clamped to [0, 1].
//! The same representation covers forward response curves and their inverses;
//! [`EmorKind`] records which one a basis holds.

use serde::{Deserialize, Serialize};

use crate::curve::ResponseCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmorKind {
    Forward,
    Inverse,
}

/// Mean curve and the first k eigenvector curves, all on one sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmorBasis {
    pub kind: EmorKind,
    mean: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl EmorBasis {
    pub fn new(kind: EmorKind, mean: Vec<f64>, eigenvectors: Vec<Vec<f64>>) -> Result<Self> {
        if eigenvectors.is_empty() {
            return Err(Error::InsufficientData {
                context: "basis eigenvectors",
                required: 1,
                actual: 0,
            });
        }
        for (i, ev) in eigenvectors.iter().enumerate() {
            if ev.len() != mean.len() {
                return Err(Error::DimensionMismatch {
                    context: "eigenvector sample count",
                    expected: mean.len(),
                    actual: eigenvectors[i].len(),
                });
            }
        }
        Ok(EmorBasis {
            kind,
            mean,
            eigenvectors,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    /// Number of eigenvectors k.
    pub fn k(&self) -> usize {
        self.eigenvectors.len()
    }

    /// Sample count per curve.
    pub fn sample_count(&self) -> usize {
        self.mean.len()
    }

    /// A copy truncated to the first `k` eigenvectors.
    pub fn truncated(&self, k: usize) -> Result<EmorBasis> {
        if k == 0 || k > self.k() {
            return Err(Error::Config(format!(
                "basis truncation k={k} outside 1..={}",
                self.k()
            )));
        }
        EmorBasis::new(
            self.kind,
            self.mean.clone(),
            self.eigenvectors[..k].to_vec(),
        )
    }

    /// The mean curve as a [`ResponseCurve`].
    pub fn mean_curve(&self) -> Result<ResponseCurve> {
        let name = match self.kind {
            EmorKind::Forward => "emor-mean",
            EmorKind::Inverse => "inverse-emor-mean",
        };
        ResponseCurve::new(name, self.mean.clone())
    }

    /// Least-squares projection of a sampled curve onto the basis: the
    /// coefficient vector minimising the residual to `samples - mean`.
    /// Components from PCA are mutually orthogonal (not necessarily unit
    /// norm), so each coefficient is a normalised dot product.
    pub fn project(&self, samples: &[f64]) -> Result<EmorCoefficients> {
        if samples.len() != self.sample_count() {
            return Err(Error::DimensionMismatch {
                context: "curve sample count",
                expected: self.sample_count(),
                actual: samples.len(),
            });
        }
        let theta = self
            .eigenvectors
            .iter()
            .map(|ev| {
                let dot: f64 = ev
                    .iter()
                    .zip(samples.iter().zip(&self.mean))
                    .map(|(e, (s, m))| e * (s - m))
                    .sum();
                let norm2: f64 = ev.iter().map(|e| e * e).sum();
                dot / norm2
            })
            .collect();
        Ok(EmorCoefficients { theta })
    }
}

/// Coefficient vector pairing with an [`EmorBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmorCoefficients {
    pub theta: Vec<f64>,
}

impl EmorCoefficients {
    pub fn zeros(k: usize) -> Self {
        EmorCoefficients {
            theta: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Reconstruct `H0 + theta^T H_{1:k}`, clamped to [0, 1].
///
/// Monotonicity is deliberately not enforced here; candidate curves are
/// constrained by the optimiser and repaired at the calibration boundary.
pub fn emor_reconstruct(basis: &EmorBasis, theta: &EmorCoefficients) -> Result<ResponseCurve> {
    let samples = emor_reconstruct_raw(basis, theta)?;
    ResponseCurve::new("emor-reconstruction", samples.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Reconstruction before clamping; used by the optimiser's smoothness and
/// monotonicity terms, which must see the unclamped shape.
pub fn emor_reconstruct_raw(basis: &EmorBasis, theta: &EmorCoefficients) -> Result<Vec<f64>> {
    if theta.len() != basis.k() {
        return Err(Error::DimensionMismatch {
            context: "coefficient count",
            expected: basis.k(),
            actual: theta.len(),
        });
    }
    let mut samples = basis.mean().to_vec();
    for (coef, ev) in theta.theta.iter().zip(basis.eigenvectors()) {
        for (s, e) in samples.iter_mut().zip(ev) {
            *s += coef * e;
        }
    }
    Ok(samples)
}
