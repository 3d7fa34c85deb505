//! Problem instances with perturbed context generation.
//!
//! A round draws mean contexts `mu_a` from a fixed distribution, marks some
//! actions unavailable, and jitters every available mean with i.i.d.
//! `N(0, rho^2)` noise per coordinate. Rewards are linear in the context with
//! Gaussian noise.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, norm2, Cholesky, Matrix};

/// Slack allowed on the unit-norm bound for stored mean contexts.
pub const MEAN_NORM_TOL: f64 = 1e-12;

/// Gaussian prior `N(mean, covariance)` over the latent parameter.
#[derive(Debug, Clone)]
pub struct Prior {
    mean: Vec<f64>,
    covariance: Matrix,
    chol: Cholesky,
    precision: Matrix,
}

impl Prior {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if !covariance.is_square() || covariance.rows() != mean.len() {
            return Err(Error::InvalidPrior(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.rows(),
                covariance.cols()
            )));
        }
        if mean.is_empty() {
            return Err(Error::InvalidPrior("dimension must be positive".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPrior("mean has non-finite entries".into()));
        }
        let asym = covariance.max_asymmetry();
        if asym > crate::linalg::SYMMETRY_TOL {
            return Err(Error::InvalidPrior(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let chol = Cholesky::new(&covariance)
            .map_err(|_| Error::InvalidPrior("covariance is not positive definite".into()))?;
        let precision = chol.inverse()?;
        Ok(Self {
            mean,
            covariance,
            chol,
            precision,
        })
    }

    /// `N(mean, scale * I)`.
    pub fn isotropic(mean: Vec<f64>, scale: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Matrix::scaled_identity(d, scale))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    /// `Sigma^-1`.
    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    /// Draws `theta ~ N(mean, Sigma)` as `mean + L z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = self.chol.lower();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

pub fn sample_theta<R: Rng + ?Sized>(prior: &Prior, rng: &mut R) -> Vec<f64> {
    prior.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanKind {
    FixedMeans,
    UniformSphere,
    FromFile,
}

/// Distribution of the per-round mean contexts.
#[derive(Debug, Clone)]
pub struct MeanContextDistribution {
    kind: MeanKind,
    k: usize,
    d: usize,
    means: Option<Matrix>,
    /// Per-action probability of being available in a round.
    availability: Vec<f64>,
    source: Option<PathBuf>,
}

impl MeanContextDistribution {
    /// The same mean for each action every round (rows of `means`).
    pub fn fixed(means: Matrix) -> Result<Self> {
        for (a, row) in means.row_iter().enumerate() {
            let n = norm2(row);
            if !(n <= 1.0 + MEAN_NORM_TOL) {
                return Err(Error::InvalidInstance(format!(
                    "mean context of action {a} has norm {n} > 1"
                )));
            }
        }
        if means.rows() == 0 || means.cols() == 0 {
            return Err(Error::InvalidInstance("mean matrix is empty".into()));
        }
        Ok(Self {
            kind: MeanKind::FixedMeans,
            k: means.rows(),
            d: means.cols(),
            availability: vec![1.0; means.rows()],
            means: Some(means),
            source: None,
        })
    }

    /// Each action's mean is an independent uniform draw from the unit sphere
    /// every round.
    pub fn uniform_sphere(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidInstance("K and d must be positive".into()));
        }
        Ok(Self {
            kind: MeanKind::UniformSphere,
            k,
            d,
            means: None,
            availability: vec![1.0; k],
            source: None,
        })
    }

    /// Parses the plain-text means format; see [`parse_means`].
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_means(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let mut dist = Self::fixed(parsed.means).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        dist.kind = MeanKind::FromFile;
        dist.source = Some(path.to_path_buf());
        if let Some(p) = parsed.unavailable {
            let k = dist.k;
            dist = dist.with_availability(vec![1.0 - p; k])?;
        }
        Ok(dist)
    }

    /// Replaces the availability probabilities (one per action).
    pub fn with_availability(mut self, availability: Vec<f64>) -> Result<Self> {
        if availability.len() != self.k {
            return Err(Error::InvalidInstance(format!(
                "availability has {} entries for {} actions",
                availability.len(),
                self.k
            )));
        }
        if availability.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInstance(
                "availability probabilities must lie in [0, 1]".into(),
            ));
        }
        if availability.iter().all(|&p| p == 0.0) {
            return Err(Error::InvalidInstance(
                "at least one action must have positive availability".into(),
            ));
        }
        self.availability = availability;
        Ok(self)
    }

    pub fn kind(&self) -> MeanKind {
        self.kind
    }

    pub fn num_actions(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn means(&self) -> Option<&Matrix> {
        self.means.as_ref()
    }

    pub fn availability(&self) -> &[f64] {
        &self.availability
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Availability mask, resampled until at least one action is present.
    fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        loop {
            let mask: Vec<bool> = self
                .availability
                .iter()
                .map(|&p| p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p))
                .collect();
            if mask.iter().any(|&m| m) {
                return mask;
            }
        }
    }

    /// Mean contexts for one round; `None` marks an unavailable action.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Option<Vec<f64>>> {
        let mask = self.sample_mask(rng);
        mask.into_iter()
            .enumerate()
            .map(|(a, available)| {
                if !available {
                    return None;
                }
                Some(match &self.means {
                    Some(m) => m.row(a).to_vec(),
                    None => sample_unit_sphere(self.d, rng),
                })
            })
            .collect()
    }
}

fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm2(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMeans {
    pub means: Matrix,
    /// Probability that an action is unavailable, from `# unavailable <p>`.
    pub unavailable: Option<f64>,
}

/// Parses a mean-context matrix: one row per action, whitespace-separated
/// decimals. A leading `# unavailable <prob>` line sets the per-action
/// probability of being unavailable; other `#` lines and blank lines are
/// ignored.
pub fn parse_means(text: &str) -> std::result::Result<ParsedMeans, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut unavailable = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("unavailable") {
                if !rows.is_empty() {
                    return Err(format!(
                        "line {}: `# unavailable` must precede the matrix rows",
                        lineno + 1
                    ));
                }
                let p: f64 = words
                    .next()
                    .ok_or_else(|| format!("line {}: missing probability", lineno + 1))?
                    .parse()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                if !(0.0..1.0).contains(&p) {
                    return Err(format!(
                        "line {}: unavailable probability {p} must lie in [0, 1)",
                        lineno + 1
                    ));
                }
                unavailable = Some(p);
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|e| format!("line {}: {w:?}: {e}", lineno + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no matrix rows".into());
    }
    let means = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
    Ok(ParsedMeans { means, unavailable })
}

/// A fully specified problem: prior, mean contexts, perturbation size and
/// horizon.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub prior: Prior,
    pub mean_dist: MeanContextDistribution,
    pub rho: f64,
    pub d: usize,
    pub k: usize,
    pub horizon: usize,
    pub noise_sd: f64,
}

impl ProblemInstance {
    /// Builds an instance with unit reward noise. `rho > 1/sqrt(d)` is an
    /// error when `strict`, a logged warning otherwise.
    pub fn new(
        prior: Prior,
        mean_dist: MeanContextDistribution,
        rho: f64,
        horizon: usize,
        strict: bool,
    ) -> Result<Self> {
        let d = prior.dim();
        if mean_dist.dim() != d {
            return Err(Error::InvalidInstance(format!(
                "prior has dimension {d} but mean contexts have dimension {}",
                mean_dist.dim()
            )));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInstance(format!("rho must be positive, got {rho}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon T must be at least 1".into()));
        }
        let limit = 1.0 / (d as f64).sqrt();
        if rho > limit {
            if strict {
                return Err(Error::InvalidInstance(format!(
                    "rho = {rho} exceeds 1/sqrt(d) = {limit}"
                )));
            }
            log::warn!("rho = {rho} exceeds 1/sqrt(d) = {limit}; guarantees may not apply");
        }
        Ok(Self {
            k: mean_dist.num_actions(),
            prior,
            mean_dist,
            rho,
            d,
            horizon,
            noise_sd: 1.0,
        })
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Result<Self> {
        if !(noise_sd > 0.0) || !noise_sd.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "reward noise sd must be positive, got {noise_sd}"
            )));
        }
        self.noise_sd = noise_sd;
        Ok(self)
    }

    /// Same instance with a different horizon.
    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon T must be at least 1".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn shorthand(&self) -> ShorthandParams {
        shorthand_params(self)
    }
}

/// The contexts offered in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTuple {
    pub round: usize,
    /// Indexed by action; `None` means unavailable this round.
    pub contexts: Vec<Option<Vec<f64>>>,
}

impl ContextTuple {
    pub fn new(round: usize, contexts: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if contexts.iter().all(Option::is_none) {
            return Err(Error::EmptyTuple);
        }
        let d = contexts.iter().flatten().next().map(Vec::len).unwrap_or(0);
        for x in contexts.iter().flatten() {
            check_len(d, x)?;
        }
        Ok(Self { round, contexts })
    }

    /// A tuple with every action available.
    pub fn full(round: usize, contexts: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(round, contexts.into_iter().map(Some).collect())
    }

    pub fn num_actions(&self) -> usize {
        self.contexts.len()
    }

    pub fn get(&self, action: usize) -> Option<&[f64]> {
        self.contexts.get(action).and_then(|c| c.as_deref())
    }

    /// `(action, context)` for available actions in index order.
    pub fn available(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.contexts
            .iter()
            .enumerate()
            .filter_map(|(a, c)| c.as_deref().map(|x| (a, x)))
    }
}

/// Draws one round's contexts: `x_a = mu_a + eps_a`, `eps_a ~ N(0, rho^2 I)`.
pub fn generate_context_tuple<R: Rng + ?Sized>(instance: &ProblemInstance, round: usize, rng: &mut R) -> ContextTuple {
    debug_assert!((1..=instance.horizon).contains(&round));
    let rho = instance.rho;
    let contexts = instance
        .mean_dist
        .sample(rng)
        .into_iter()
        .map(|mu| {
            mu.map(|mu| {
                mu.into_iter()
                    .map(|m| m + rho * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
        })
        .collect();
    ContextTuple { round, contexts }
}

/// `theta^T x + eta`, `eta ~ N(0, sigma^2)`.
pub fn realize_reward<R: Rng + ?Sized>(theta: &[f64], context: &[f64], sigma: f64, rng: &mut R) -> Result<f64> {
    check_len(theta.len(), context)?;
    let eta: f64 = rng.sample(StandardNormal);
    Ok(dot(theta, context) + sigma * eta)
}

/// High-probability bounds on perturbations (`r_hat`) and contexts (`r`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShorthandParams {
    /// `T^-2`.
    pub delta_r: f64,
    /// `rho * sqrt(2 log(2 T K d / delta_r))`.
    pub r_hat: f64,
    /// `1 + r_hat * sqrt(d)`.
    pub r: f64,
}

impl ShorthandParams {
    pub fn new(horizon: usize, k: usize, d: usize, rho: f64) -> Self {
        let t = horizon as f64;
        let delta_r = 1.0 / (t * t);
        let r_hat = rho * (2.0 * (2.0 * t * k as f64 * d as f64 / delta_r).ln()).sqrt();
        let r = 1.0 + r_hat * (d as f64).sqrt();
        Self { delta_r, r_hat, r }
    }
}

pub fn shorthand_params(instance: &ProblemInstance) -> ShorthandParams {
    ShorthandParams::new(instance.horizon, instance.k, instance.d, instance.rho)
}
