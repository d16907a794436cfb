//! Gaussian-process regression over the (scale, brightness) square with a
//! zero prior mean: the surrogate behind the UCB acquisition.
//!
//! Posterior equations are the standard ones,
//! `mu = k*' (K + s_n^2 I)^-1 y` and
//! `var = k(x,x) - k*' (K + s_n^2 I)^-1 k*`,
//! solved through a Cholesky factorization with an escalating jitter
//! fallback capped at 1e-8.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::AugParams;

/// Observations closer than this (per axis) are treated as repeats of the
/// same point and merged by averaging, keeping the Gram matrix well
/// conditioned.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Largest diagonal jitter the Cholesky fallback may add.
pub const MAX_JITTER: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("kernel matrix is not positive-definite even with jitter {MAX_JITTER}")]
    SingularKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub length_scale: f64,
    /// Signal variance (sigma_f squared).
    pub signal_var: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            length_scale: 0.25,
            signal_var: 0.09,
        }
    }
}

impl KernelConfig {
    pub fn eval(&self, a: &AugParams, b: &AugParams) -> f64 {
        let d = a.distance(b);
        match self.family {
            KernelFamily::Matern52 => {
                let r = 5f64.sqrt() * d / self.length_scale;
                self.signal_var * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
            KernelFamily::SquaredExponential => {
                let r2 = (d / self.length_scale).powi(2);
                self.signal_var * (-0.5 * r2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MergedObservation {
    params: AugParams,
    y_sum: f64,
    count: u32,
}

impl MergedObservation {
    fn y(&self) -> f64 {
        self.y_sum / f64::from(self.count)
    }
}

/// The observation set defining the posterior.
#[derive(Debug, Clone)]
pub struct GpDataset {
    observations: Vec<MergedObservation>,
    pub kernel: KernelConfig,
    pub noise_var: f64,
}

impl GpDataset {
    pub fn new(kernel: KernelConfig, noise_var: f64) -> Self {
        Self {
            observations: Vec::new(),
            kernel,
            noise_var,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// (params, averaged y) pairs.
    pub fn points(&self) -> impl Iterator<Item = (AugParams, f64)> + '_ {
        self.observations.iter().map(|o| (o.params, o.y()))
    }

    /// Add an observation, merging exact repeats by averaging.
    pub fn push(&mut self, params: AugParams, y: f64) {
        if let Some(existing) = self.observations.iter_mut().find(|o| {
            (o.params.scale - params.scale).abs() <= DUPLICATE_TOLERANCE
                && (o.params.brightness - params.brightness).abs() <= DUPLICATE_TOLERANCE
        }) {
            existing.y_sum += y;
            existing.count += 1;
        } else {
            self.observations.push(MergedObservation {
                params,
                y_sum: y,
                count: 1,
            });
        }
    }

    /// Log marginal likelihood of the observations under the current
    /// kernel: `-y' alpha / 2 - sum(ln L_ii) - n ln(2 pi) / 2`.
    pub fn log_marginal_likelihood(&self) -> Result<f64, GpError> {
        let n = self.observations.len();
        if n == 0 {
            return Ok(0.0);
        }
        let y = DVector::from_iterator(n, self.observations.iter().map(|o| o.y()));
        let fitted = self.fit()?;
        let chol = fitted.chol.as_ref().expect("non-empty fit has a factor");
        let alpha = chol.solve(&y);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(-0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Re-select the kernel hyperparameters by maximizing the marginal
    /// likelihood over a fixed candidate grid. The kernel family is kept;
    /// the scan order makes ties deterministic.
    pub fn refit(&mut self) -> Result<KernelConfig, GpError> {
        const LENGTH_SCALES: [f64; 5] = [0.1, 0.15, 0.25, 0.35, 0.5];
        const SIGNAL_VARS: [f64; 4] = [0.01, 0.04, 0.09, 0.25];
        let mut best = (self.kernel, f64::NEG_INFINITY);
        let original = self.kernel;
        for ls in LENGTH_SCALES {
            for sv in SIGNAL_VARS {
                self.kernel = KernelConfig {
                    family: original.family,
                    length_scale: ls,
                    signal_var: sv,
                };
                if let Ok(lml) = self.log_marginal_likelihood() {
                    if lml > best.1 {
                        best = (self.kernel, lml);
                    }
                }
            }
        }
        self.kernel = if best.1.is_finite() { best.0 } else { original };
        Ok(self.kernel)
    }

    /// Factor the Gram matrix once for repeated posterior queries.
    pub fn fit(&self) -> Result<FittedGp, GpError> {
        let n = self.observations.len();
        let x: Vec<AugParams> = self.observations.iter().map(|o| o.params).collect();
        if n == 0 {
            return Ok(FittedGp {
                x,
                alpha: DVector::zeros(0),
                chol: None,
                kernel: self.kernel,
                jitter_used: 0.0,
            });
        }
        let y = DVector::from_iterator(n, self.observations.iter().map(|o| o.y()));
        let gram = DMatrix::from_fn(n, n, |i, j| {
            self.kernel.eval(&x[i], &x[j]) + if i == j { self.noise_var } else { 0.0 }
        });
        let mut jitter = 0.0;
        loop {
            let jittered = &gram + DMatrix::identity(n, n) * jitter;
            if let Some(chol) = jittered.cholesky() {
                let alpha = chol.solve(&y);
                return Ok(FittedGp {
                    x,
                    alpha,
                    chol: Some(chol),
                    kernel: self.kernel,
                    jitter_used: jitter,
                });
            }
            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
            if jitter > MAX_JITTER {
                return Err(GpError::SingularKernel);
            }
        }
    }
}

/// A factored posterior ready for queries.
#[derive(Debug, Clone)]
pub struct FittedGp {
    x: Vec<AugParams>,
    alpha: DVector<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    kernel: KernelConfig,
    pub jitter_used: f64,
}

impl FittedGp {
    /// Posterior mean and standard deviation at a query point. The empty
    /// dataset gives the prior (0, sigma_f).
    pub fn predict(&self, query: &AugParams) -> (f64, f64) {
        let prior_var = self.kernel.eval(query, query);
        let Some(chol) = &self.chol else {
            return (0.0, prior_var.sqrt());
        };
        let k_star = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.kernel.eval(xi, query)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = chol.solve(&k_star);
        let var = (prior_var - k_star.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }
}

/// One-shot posterior query.
pub fn gp_posterior(data: &GpDataset, query: &AugParams) -> Result<(f64, f64), GpError> {
    Ok(data.fit()?.predict(query))
}

/// Upper confidence bound `mu + kappa * sigma`.
pub fn ucb(data: &GpDataset, query: &AugParams, kappa: f64) -> Result<f64, GpError> {
    let (mu, sigma) = gp_posterior(data, query)?;
    Ok(mu + kappa * sigma)
}
