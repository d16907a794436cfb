//! The optimization loop over (scale, brightness): seeded random
//! initialization, GP posterior refresh, UCB proposal, evaluation, and
//! the three stopping rules (budget, acquisition convergence, success
//! threshold).

pub mod gp;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::AugParams;
use crate::seed;
pub use gp::{gp_posterior, ucb, FittedGp, GpDataset, GpError, KernelConfig, KernelFamily};

/// Acquisition grid resolution per axis (101 x 101 points).
pub const GRID_STEPS: usize = 100;

/// Smallest refinement step for the local acquisition search.
pub const REFINE_MIN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    /// UCB exploration weight.
    pub kappa: f64,
    /// Stop when the maximal acquisition falls below this.
    pub epsilon: f64,
    /// Proposal budget after initialization.
    pub budget: u32,
    /// Random evaluations before the first proposal.
    pub init_samples: u32,
    /// Return early once an evaluation reaches this success rate.
    pub success_threshold: f64,
    /// Re-select kernel hyperparameters by marginal likelihood before
    /// each proposal instead of keeping them fixed.
    pub refit_hyperparams: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            kappa: 2.567,
            epsilon: 0.01,
            budget: 30,
            init_samples: 5,
            success_threshold: 0.7,
            refit_hyperparams: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// An evaluation reached the success threshold.
    ThresholdReached,
    /// No promising regions remain: max acquisition below epsilon.
    Converged,
    BudgetExhausted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::ThresholdReached => "threshold_reached",
            StopReason::Converged => "converged",
            StopReason::BudgetExhausted => "budget_exhausted",
        })
    }
}

/// One evaluated point in the optimization history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoObservation {
    pub index: u32,
    pub params: AugParams,
    pub y: f64,
    /// Acquisition value at proposal time; `None` for the random
    /// initialization samples.
    pub acquisition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub observations: Vec<BoObservation>,
    pub best_params: AugParams,
    pub best_y: f64,
    pub stop_reason: StopReason,
    /// Largest Cholesky jitter any posterior refresh needed.
    pub max_jitter_used: f64,
}

#[derive(Debug, Error)]
pub enum OptimizeError<E: std::error::Error + 'static> {
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("objective evaluation failed: {source}")]
    Objective {
        source: E,
        /// Whatever history had accumulated before the failure.
        partial: Vec<BoObservation>,
    },
}

/// Exhaustive UCB argmax over the dense grid. First maximum in row-major
/// (S then B) order wins, so ties break toward the lowest coordinates.
fn grid_argmax(fitted: &FittedGp, kappa: f64) -> (AugParams, f64) {
    let mut best = (
        AugParams {
            scale: 0.0,
            brightness: 0.0,
        },
        f64::NEG_INFINITY,
    );
    for i in 0..=GRID_STEPS {
        let s = i as f64 / GRID_STEPS as f64;
        for j in 0..=GRID_STEPS {
            let b = j as f64 / GRID_STEPS as f64;
            let q = AugParams {
                scale: s,
                brightness: b,
            };
            let (mu, sigma) = fitted.predict(&q);
            let a = mu + kappa * sigma;
            if a > best.1 {
                best = (q, a);
            }
        }
    }
    best
}

/// Coordinate descent with step halving from a grid point down to
/// [`REFINE_MIN_STEP`], clamped to the unit square.
fn refine(fitted: &FittedGp, kappa: f64, start: (AugParams, f64)) -> (AugParams, f64) {
    let acq = |q: &AugParams| {
        let (mu, sigma) = fitted.predict(q);
        mu + kappa * sigma
    };
    let (mut best_p, mut best_a) = start;
    let mut step = 0.5 / GRID_STEPS as f64;
    while step >= REFINE_MIN_STEP {
        let mut improved = false;
        for (ds, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = AugParams {
                scale: (best_p.scale + ds).clamp(0.0, 1.0),
                brightness: (best_p.brightness + db).clamp(0.0, 1.0),
            };
            let a = acq(&cand);
            if a > best_a {
                best_p = cand;
                best_a = a;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (best_p, best_a)
}

/// Maximize the acquisition over the unit square: dense grid plus local
/// refinement. Fully deterministic.
pub fn propose_next(data: &GpDataset, kappa: f64) -> Result<(AugParams, f64), GpError> {
    let fitted = data.fit()?;
    Ok(refine(&fitted, kappa, grid_argmax(&fitted, kappa)))
}

/// Run the full optimization loop against an objective. The objective
/// receives the evaluation index so it can derive its own seed stream.
pub fn optimize<E: std::error::Error + 'static>(
    mut objective: impl FnMut(AugParams, u32) -> Result<f64, E>,
    bo: &BoConfig,
    kernel: KernelConfig,
    noise_var: f64,
    run_seed: u64,
) -> Result<OptimizationReport, OptimizeError<E>> {
    assert!(bo.init_samples >= 1, "need at least one initial sample");
    assert!(bo.budget >= 1, "need a positive budget");
    let mut data = GpDataset::new(kernel, noise_var);
    let mut observations: Vec<BoObservation> = Vec::new();
    let mut max_jitter = 0.0f64;

    let mut eval = |p: AugParams,
                    index: u32,
                    acquisition: Option<f64>,
                    data: &mut GpDataset,
                    observations: &mut Vec<BoObservation>|
     -> Result<f64, OptimizeError<E>> {
        let y = objective(p, index).map_err(|source| OptimizeError::Objective {
            source,
            partial: observations.clone(),
        })?;
        data.push(p, y);
        observations.push(BoObservation {
            index,
            params: p,
            y,
            acquisition,
        });
        Ok(y)
    };

    let mut rng = seed::stream(run_seed, "bo-init", &[]);
    for i in 0..bo.init_samples {
        let p = AugParams {
            scale: rng.random(),
            brightness: rng.random(),
        };
        eval(p, i, None, &mut data, &mut observations)?;
    }

    let mut stop_reason = StopReason::BudgetExhausted;
    for n in 0..bo.budget {
        if bo.refit_hyperparams {
            data.refit()?;
        }
        let fitted = data.fit()?;
        max_jitter = max_jitter.max(fitted.jitter_used);
        let (p, acq) = refine(&fitted, bo.kappa, grid_argmax(&fitted, bo.kappa));
        if acq < bo.epsilon {
            stop_reason = StopReason::Converged;
            break;
        }
        let y = eval(p, bo.init_samples + n, Some(acq), &mut data, &mut observations)?;
        if y >= bo.success_threshold {
            stop_reason = StopReason::ThresholdReached;
            break;
        }
    }

    let best = observations
        .iter()
        .copied()
        .reduce(|a, b| if b.y > a.y { b } else { a })
        .expect("at least one initialization sample");
    Ok(OptimizationReport {
        observations,
        best_params: best.params,
        best_y: best.y,
        stop_reason,
        max_jitter_used: max_jitter,
    })
}

/// Posterior mean/std over the dense grid, row-major in S then B; the
/// data behind the contour plots.
pub fn posterior_grid(data: &GpDataset) -> Result<Vec<(f64, f64, f64, f64)>, GpError> {
    let fitted = data.fit()?;
    let mut rows = Vec::with_capacity((GRID_STEPS + 1) * (GRID_STEPS + 1));
    for i in 0..=GRID_STEPS {
        let s = i as f64 / GRID_STEPS as f64;
        for j in 0..=GRID_STEPS {
            let b = j as f64 / GRID_STEPS as f64;
            let (mu, sigma) = fitted.predict(&AugParams {
                scale: s,
                brightness: b,
            });
            rows.push((s, b, mu, sigma));
        }
    }
    Ok(rows)
}
