//! Sampled response curves on [0, 1] and their numerical inversion.
//!
//! A [`ResponseCurve`] holds S uniformly spaced samples of a camera response
//! function (or its inverse) over [0, 1]. Curves loaded from the response
//! database are normalised to exact endpoints {0, 1} and monotone
//! non-decreasing samples; intermediate candidates produced during model
//! fitting may temporarily violate monotonicity and are repaired before they
//! leave calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of curve samples, matching the published response-curve
/// database grids.
pub const CURVE_SAMPLES: usize = 1024;

/// Endpoint tolerance for normalised curves.
pub const ENDPOINT_TOL: f64 = 1e-6;

/// A sampled map on [0, 1]: `samples[i]` is the value at `i / (S - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub name: String,
    samples: Vec<f64>,
}

impl ResponseCurve {
    /// Wrap raw samples. Requires at least two finite samples inside [0, 1];
    /// monotonicity is *not* required here (candidate curves produced during
    /// optimisation may violate it until repaired).
    pub fn new(name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if samples.len() < 2 {
            return Err(Error::InvalidCurve {
                name,
                reason: format!("need at least 2 samples, got {}", samples.len()),
            });
        }
        if let Some(bad) = samples
            .iter()
            .find(|v| !v.is_finite() || **v < -1e-12 || **v > 1.0 + 1e-12)
        {
            return Err(Error::InvalidCurve {
                name,
                reason: format!("sample {bad} outside [0, 1]"),
            });
        }
        let samples = samples.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(ResponseCurve { name, samples })
    }

    /// The identity map y = x.
    pub fn identity(len: usize) -> Self {
        let step = 1.0 / (len - 1) as f64;
        ResponseCurve {
            name: "identity".into(),
            samples: (0..len).map(|i| i as f64 * step).collect(),
        }
    }

    /// Sample a closed-form map at `len` uniform abscissae.
    pub fn from_fn(name: impl Into<String>, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let step = 1.0 / (len - 1) as f64;
        ResponseCurve::new(name, (0..len).map(|i| f(i as f64 * step)).collect())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Check the full response-curve invariants: monotone non-decreasing
    /// samples with endpoints 0 and 1 within [`ENDPOINT_TOL`].
    pub fn check_normalised(&self) -> Result<()> {
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::NonMonotone {
                    name: self.name.clone(),
                    index: i + 1,
                    violation: w[0] - w[1],
                });
            }
        }
        let first = self.samples[0];
        let last = *self.samples.last().unwrap();
        if first.abs() > ENDPOINT_TOL || (last - 1.0).abs() > ENDPOINT_TOL {
            return Err(Error::InvalidCurve {
                name: self.name.clone(),
                reason: format!("endpoints ({first}, {last}) deviate from (0, 1)"),
            });
        }
        Ok(())
    }

    /// Largest decrease between consecutive samples (0 for monotone curves).
    pub fn monotonicity_violation(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Repair small monotonicity violations and renormalise the endpoints to
    /// exactly {0, 1}. Violations larger than `max_violation` are rejected.
    ///
    /// The repair is an isotonic clip (running maximum), which absorbs the
    /// quantisation jitter present in published curve data.
    pub fn normalised(&self, max_violation: f64) -> Result<ResponseCurve> {
        let violation = self.monotonicity_violation();
        if violation > max_violation {
            let idx = self
                .samples
                .windows(2)
                .position(|w| w[0] - w[1] >= violation)
                .unwrap_or(0);
            return Err(Error::NonMonotone {
                name: self.name.clone(),
                index: idx + 1,
                violation,
            });
        }
        let mut samples = self.samples.clone();
        let mut running = f64::NEG_INFINITY;
        for v in samples.iter_mut() {
            running = running.max(*v);
            *v = running;
        }
        let first = samples[0];
        let last = *samples.last().unwrap();
        let span = last - first;
        if span <= 0.0 {
            return Err(Error::InvalidCurve {
                name: self.name.clone(),
                reason: "constant curve cannot be normalised".into(),
            });
        }
        for v in samples.iter_mut() {
            *v = ((*v - first) / span).clamp(0.0, 1.0);
        }
        Ok(ResponseCurve {
            name: self.name.clone(),
            samples,
        })
    }

    /// Piecewise-linear interpolation at `x` in [0, 1]; exact at sample
    /// abscissae. Values outside the domain are an error (no extrapolation).
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::CurveDomain { value: x });
        }
        Ok(eval_samples(&self.samples, x))
    }

    /// Piecewise-linear interpolation with the input clamped into [0, 1].
    /// The saturating variant used inside pipelines where affine alignment
    /// can push values slightly out of the domain.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        eval_samples(&self.samples, x.clamp(0.0, 1.0))
    }

    /// Numerically invert a monotone curve onto the uniform grid.
    ///
    /// Consecutive equal samples (quantisation duplicates) are collapsed
    /// before interpolation; the result keeps endpoints (0, 1) and satisfies
    /// `inv(f(x)) = x` within `2 / S` wherever the input is strictly
    /// increasing.
    pub fn inverted(&self) -> Result<ResponseCurve> {
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::NonMonotone {
                    name: self.name.clone(),
                    index: i + 1,
                    violation: w[0] - w[1],
                });
            }
        }
        let s = self.samples.len();
        let step = 1.0 / (s - 1) as f64;

        // Collapse runs of equal values. Keep the first abscissa of each run
        // so the inverse maps the run's value to the run's onset, except the
        // final run which keeps its last abscissa so that inv(1) = 1.
        let mut xs: Vec<f64> = Vec::with_capacity(s);
        let mut ys: Vec<f64> = Vec::with_capacity(s);
        let mut i = 0;
        while i < s {
            let mut j = i;
            while j + 1 < s && self.samples[j + 1] == self.samples[i] {
                j += 1;
            }
            let x = if j == s - 1 { j } else { i };
            xs.push(x as f64 * step);
            ys.push(self.samples[i]);
            i = j + 1;
        }
        if ys.len() < 2 {
            return Err(Error::InvalidCurve {
                name: self.name.clone(),
                reason: "constant curve has no inverse".into(),
            });
        }

        let lo = ys[0];
        let hi = *ys.last().unwrap();
        let mut inv = Vec::with_capacity(s);
        let mut seg = 0;
        for k in 0..s {
            let y = (k as f64 * step).clamp(0.0, 1.0);
            let x = if y <= lo {
                xs[0]
            } else if y >= hi {
                *xs.last().unwrap()
            } else {
                while ys[seg + 1] < y {
                    seg += 1;
                }
                let t = (y - ys[seg]) / (ys[seg + 1] - ys[seg]);
                xs[seg] + t * (xs[seg + 1] - xs[seg])
            };
            inv.push(x.clamp(0.0, 1.0));
        }
        inv[0] = 0.0;
        let last = inv.len() - 1;
        inv[last] = 1.0;
        ResponseCurve::new(format!("{}-inverse", self.name), inv)
    }
}

/// Piecewise-linear lookup into uniform samples; `x` must already be in [0, 1].
pub(crate) fn eval_samples(samples: &[f64], x: f64) -> f64 {
    let n = samples.len();
    let pos = x * (n - 1) as f64;
    let idx = (pos.floor() as usize).min(n - 2);
    let frac = pos - idx as f64;
    samples[idx] + frac * (samples[idx + 1] - samples[idx])
}
