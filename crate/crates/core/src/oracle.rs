//! Reward simulation from a batch history, and data-diversity diagnostics.
//!
//! Given a batch with context matrix `X_B` (one row per round) and rewards
//! `r_B`, any context `x` with `x^T Z_B^-1 x <= 1` can be assigned a
//! synthetic reward
//!
//! ```text
//! g(x, h_B) = w_B^T r_B + N(0, sigma^2 (1 - |w_B|^2)),   w_B = X_B Z_B^-1 x
//! ```
//!
//! whose law, conditional on `X_B`, is exactly `N(theta^T x, sigma^2)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, min_eigenvalue, Cholesky, CovarianceAccumulator, EigenReport, Matrix};
use crate::model::ProblemInstance;

/// `Z_B` must have `lambda_min` above this to be inverted.
pub const SINGULAR_TOL: f64 = 1e-10;
/// Slack on `|w_B|^2 <= 1` before a context counts as out of radius.
pub const RADIUS_SLACK: f64 = 1e-9;

/// `8 e^2 / (e - 1)^2`, the leading constant of `Y0`.
pub fn y0_leading_constant() -> f64 {
    let e = std::f64::consts::E;
    8.0 * e * e / ((e - 1.0) * (e - 1.0))
}

/// Leading constant of `tau0`.
pub const TAU0_CONSTANT: f64 = 160.0;

/// Batch size above which a single batch's covariance has
/// `lambda_min >= R^2` with probability `1 - delta`.
pub fn compute_y0(r: f64, rho: f64, d: usize, horizon: usize, delta: f64) -> f64 {
    let e = std::f64::consts::E;
    let ratio = r / rho;
    ratio * ratio * y0_leading_constant() * (1.0 + (2.0 * d as f64 / delta).ln()) * (horizon as f64).ln()
        + 4.0 * e / (e - 1.0) * (2.0 / delta).ln()
}

/// Round after which `lambda_min(Z_t) >= rho^2 t / (32 log T)` with
/// probability `1 - delta`.
pub fn compute_tau0(r: f64, rho: f64, d: usize, horizon: usize, delta: f64) -> f64 {
    TAU0_CONSTANT * (r * r) / (rho * rho) * (2.0 * d as f64 / delta).ln() * (horizon as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityThresholds {
    pub y0: f64,
    pub tau0: f64,
    pub delta: f64,
}

impl DiversityThresholds {
    pub fn new(r: f64, rho: f64, d: usize, horizon: usize, delta: f64) -> Self {
        Self {
            y0: compute_y0(r, rho, d, horizon, delta),
            tau0: compute_tau0(r, rho, d, horizon, delta),
            delta,
        }
    }

    /// Thresholds with `R` from the instance's shorthand parameters and
    /// `delta = T^-2`.
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self::for_instance_with_delta(instance, instance.shorthand().delta_r)
    }

    pub fn for_instance_with_delta(instance: &ProblemInstance, delta: f64) -> Self {
        let r = instance.shorthand().r;
        Self::new(r, instance.rho, instance.d, instance.horizon, delta)
    }
}

/// Contexts and rewards of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    contexts: Matrix,
    rewards: Vec<f64>,
    z: Matrix,
}

impl BatchRecord {
    pub fn new(contexts: Matrix, rewards: Vec<f64>) -> Result<Self> {
        check_len(contexts.rows(), &rewards)?;
        let z = contexts.gram();
        Ok(Self { contexts, rewards, z })
    }

    pub fn contexts(&self) -> &Matrix {
        &self.contexts
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// `Z_B = X_B^T X_B`.
    pub fn covariance(&self) -> &Matrix {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.contexts.cols()
    }

    pub fn len(&self) -> usize {
        self.contexts.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn factor(&self) -> Result<Cholesky> {
        let report = min_eigenvalue(&self.z)?;
        if !(report.lambda_min > SINGULAR_TOL) {
            return Err(Error::NotSimulatable(report.lambda_min));
        }
        Cholesky::new(&self.z).map_err(|_| Error::NotSimulatable(report.lambda_min))
    }
}

/// `w_B = X_B Z_B^-1 x`, so that `X_B^T w_B = x`.
pub fn simulation_weights(batch: &BatchRecord, x: &[f64]) -> Result<Vec<f64>> {
    check_len(batch.dim(), x)?;
    let u = batch.factor()?.solve(x)?;
    batch.contexts.mul_vec(&u)
}

/// One draw of `g(x, h_B)`.
pub fn simulate_reward<R: Rng + ?Sized>(batch: &BatchRecord, x: &[f64], sigma: f64, rng: &mut R) -> Result<f64> {
    let w = simulation_weights(batch, x)?;
    let norm_sq = dot(&w, &w);
    if norm_sq > 1.0 + RADIUS_SLACK {
        return Err(Error::RadiusExceeded(norm_sq));
    }
    let residual_var = sigma * sigma * (1.0 - norm_sq).max(0.0);
    let xi: f64 = rng.sample(StandardNormal);
    Ok(dot(&w, &batch.rewards) + residual_var.sqrt() * xi)
}

/// Whether every context of norm at most `radius` can be simulated, i.e.
/// `lambda_min(Z_B) >= radius^2`.
pub fn check_simulatable(batch: &BatchRecord, radius: f64) -> Result<(bool, EigenReport)> {
    let report = min_eigenvalue(&batch.z)?;
    Ok((report.lambda_min >= radius * radius, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityPoint {
    pub round: usize,
    pub lambda_min: f64,
    /// `rho^2 t / (32 log T)`.
    pub bound: f64,
}

/// Lower bound on `lambda_min(Z_t)` once `t >= tau0`.
pub fn diversity_bound(rho: f64, round: usize, horizon: usize) -> f64 {
    rho * rho * round as f64 / (32.0 * (horizon as f64).ln())
}

/// Incremental `lambda_min(Z_t)` over the executed contexts.
#[derive(Debug, Clone)]
pub struct DiversityTracker {
    acc: CovarianceAccumulator,
    rho: f64,
    horizon: usize,
}

impl DiversityTracker {
    pub fn new(d: usize, rho: f64, horizon: usize) -> Self {
        Self {
            acc: CovarianceAccumulator::new(d),
            rho,
            horizon,
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<DiversityPoint> {
        self.acc.absorb(x, 0.0)?;
        let t = self.acc.count();
        Ok(DiversityPoint {
            round: t,
            lambda_min: min_eigenvalue(self.acc.z())?.lambda_min,
            bound: diversity_bound(self.rho, t, self.horizon),
        })
    }
}

/// Realized `lambda_min(Z_t)` and its lower bound for every prefix of
/// `history`.
pub fn diversity_trace<X: AsRef<[f64]>>(history: &[X], rho: f64, horizon: usize) -> Result<Vec<DiversityPoint>> {
    let d = history
        .first()
        .map(|x| x.as_ref().len())
        .ok_or_else(|| Error::Config("diversity trace needs a nonempty history".into()))?;
    let mut tracker = DiversityTracker::new(d, rho, horizon);
    history.iter().map(|x| tracker.push(x.as_ref())).collect()
}
