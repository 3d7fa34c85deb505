//! Bandit policies.
//!
//! The greedy family works in batches of `Y` rounds: inside a batch every
//! decision uses only the observations committed at the end of the previous
//! batch. LinUCB is not batched and sees every past round. Ties in any argmax
//! go to the lowest action index.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dot, norm2, ols_estimate, posterior_mean, ridge_estimate, CovarianceAccumulator};
use crate::model::{ContextTuple, Prior, ProblemInstance};
use crate::oracle::DiversityThresholds;

/// Batch boundaries for batch-greedy-style policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSchedule {
    batch_size: usize,
}

impl BatchSchedule {
    pub fn new(batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(Self { batch_size })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of observations visible to round `t` (1-based).
    pub fn last_committed(&self, round: usize) -> usize {
        self.batch_size * ((round.max(1) - 1) / self.batch_size)
    }

    /// Whether a commit follows round `t`.
    pub fn is_boundary(&self, round: usize) -> bool {
        round.is_multiple_of(self.batch_size)
    }
}

/// Which estimate of theta drives the greedy choice.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Posterior mean under the prior.
    Bayes(Prior),
    /// Minimum-norm least squares.
    Freq,
    /// Least squares for the executed action, posterior mean for a second
    /// "predicted" action.
    FreqWithBayesPrediction(Prior),
}

/// Committed history, pending batch, and cached estimates.
#[derive(Debug, Clone)]
pub struct PolicyState {
    schedule: BatchSchedule,
    estimator: Estimator,
    committed: CovarianceAccumulator,
    staging: Vec<(Vec<f64>, f64)>,
    estimate: Vec<f64>,
    prediction_estimate: Option<Vec<f64>>,
}

impl PolicyState {
    pub fn new(d: usize, schedule: BatchSchedule, estimator: Estimator) -> Result<Self> {
        if let Estimator::Bayes(p) | Estimator::FreqWithBayesPrediction(p) = &estimator {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        let mut state = Self {
            schedule,
            estimator,
            committed: CovarianceAccumulator::new(d),
            staging: Vec::with_capacity(schedule.batch_size()),
            estimate: vec![0.0; d],
            prediction_estimate: None,
        };
        state.recompute()?;
        Ok(state)
    }

    pub fn schedule(&self) -> BatchSchedule {
        self.schedule
    }

    pub fn committed(&self) -> &CovarianceAccumulator {
        &self.committed
    }

    pub fn staged(&self) -> &[(Vec<f64>, f64)] {
        &self.staging
    }

    /// Estimate used for the executed action.
    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    /// Posterior-mean estimate used for the predicted action, if any.
    pub fn prediction_estimate(&self) -> Option<&[f64]> {
        self.prediction_estimate.as_deref()
    }

    fn recompute(&mut self) -> Result<()> {
        match &self.estimator {
            Estimator::Bayes(prior) => {
                self.estimate = posterior_mean(prior, &self.committed)?;
            }
            Estimator::Freq => {
                self.estimate = ols_estimate(&self.committed)?;
            }
            Estimator::FreqWithBayesPrediction(prior) => {
                self.estimate = ols_estimate(&self.committed)?;
                self.prediction_estimate = Some(posterior_mean(prior, &self.committed)?);
            }
        }
        Ok(())
    }

    /// Queues an observation for the next commit.
    pub fn stage(&mut self, x: &[f64], r: f64) -> Result<()> {
        check_len(self.committed.dim(), x)?;
        if self.staging.len() >= self.schedule.batch_size() {
            return Err(Error::OffBoundaryCommit {
                staged: self.staging.len() + 1,
                batch_size: self.schedule.batch_size(),
            });
        }
        self.staging.push((x.to_vec(), r));
        Ok(())
    }

    pub fn batch_full(&self) -> bool {
        self.staging.len() == self.schedule.batch_size()
    }

    /// Absorbs a full batch into the committed history and refreshes the
    /// estimates.
    pub fn commit_batch(&mut self) -> Result<()> {
        if !self.batch_full() {
            return Err(Error::OffBoundaryCommit {
                staged: self.staging.len(),
                batch_size: self.schedule.batch_size(),
            });
        }
        for (x, r) in self.staging.drain(..) {
            self.committed.absorb(&x, r)?;
        }
        self.recompute()
    }
}

/// Available action maximizing `estimate^T x`, lowest index on ties.
pub fn select_greedy(estimate: &[f64], tuple: &ContextTuple) -> Result<usize> {
    argmax_available(tuple, |x| {
        check_len(estimate.len(), x)?;
        Ok(dot(estimate, x))
    })
}

fn argmax_available(tuple: &ContextTuple, mut score: impl FnMut(&[f64]) -> Result<f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, x) in tuple.available() {
        let s = score(x)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((a, s));
        }
    }
    best.map(|(a, _)| a).ok_or(Error::EmptyTuple)
}

pub fn bayes_greedy_act(state: &PolicyState, tuple: &ContextTuple) -> Result<usize> {
    select_greedy(state.estimate(), tuple)
}

pub fn freq_greedy_act(state: &PolicyState, tuple: &ContextTuple) -> Result<usize> {
    select_greedy(state.estimate(), tuple)
}

/// `(executed, predicted)` for the least-squares policy with a posterior-mean
/// prediction rule, both computed from the same committed history.
pub fn prediction_wrapper_act(state: &PolicyState, tuple: &ContextTuple) -> Result<(usize, usize)> {
    let executed = select_greedy(state.estimate(), tuple)?;
    let bayes = state
        .prediction_estimate()
        .ok_or_else(|| Error::Internal("state has no prediction estimate".into()))?;
    Ok((executed, select_greedy(bayes, tuple)?))
}

/// Interval width `f(t)` used by LinUCB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WidthFn {
    /// `S + sqrt(d c0 log(T + t T L^2))`.
    SelfNormalized,
    /// Fixed width; `Constant(0.0)` turns LinUCB into ridge greedy.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinUcbParams {
    /// Bound on context norms.
    pub l: f64,
    /// Bound on the parameter norm.
    pub s: f64,
    pub c0: f64,
    pub width: WidthFn,
}

/// Lower bounds `(L, S)` on the LinUCB parameters. Horizon is real-valued so
/// the formulas can be evaluated off the integer grid.
pub fn linucb_lower_bounds(theta_bar_norm: f64, d: usize, k: usize, horizon: f64, rho: f64) -> (f64, f64) {
    let d = d as f64;
    let l = 1.0 + rho * (2.0 * d * (2.0 * horizon.powi(3) * k as f64 * d).ln()).sqrt();
    let s = theta_bar_norm + (3.0 * d * horizon.ln()).sqrt();
    (l, s)
}

impl LinUcbParams {
    /// Parameters at their lower bounds, `c0 = 1`.
    pub fn at_bounds(theta_bar_norm: f64, d: usize, k: usize, horizon: f64, rho: f64) -> Result<Self> {
        let (l, s) = linucb_lower_bounds(theta_bar_norm, d, k, horizon, rho);
        if s >= horizon {
            return Err(Error::HorizonTooSmall { s, horizon });
        }
        Ok(Self {
            l,
            s,
            c0: 1.0,
            width: WidthFn::SelfNormalized,
        })
    }

    /// Defaults for `instance`, optionally raising `L` or `S`. Overrides below
    /// the lower bounds are rejected.
    pub fn for_instance(instance: &ProblemInstance, l: Option<f64>, s: Option<f64>) -> Result<Self> {
        let mut params = linucb_default_params(instance)?;
        if let Some(l) = l {
            if l < params.l {
                return Err(Error::ParamBelowBound {
                    name: "L",
                    value: l,
                    bound: params.l,
                });
            }
            params.l = l;
        }
        if let Some(s) = s {
            if s < params.s {
                return Err(Error::ParamBelowBound {
                    name: "S",
                    value: s,
                    bound: params.s,
                });
            }
            let horizon = instance.horizon as f64;
            if s >= horizon {
                return Err(Error::HorizonTooSmall { s, horizon });
            }
            params.s = s;
        }
        Ok(params)
    }

    pub fn with_width(mut self, width: WidthFn) -> Self {
        self.width = width;
        self
    }

    pub fn width_at(&self, round: usize, d: usize, horizon: usize) -> f64 {
        match self.width {
            WidthFn::Constant(w) => w,
            WidthFn::SelfNormalized => {
                let t = round as f64;
                let horizon = horizon as f64;
                self.s + (d as f64 * self.c0 * (horizon + t * horizon * self.l * self.l).ln()).sqrt()
            }
        }
    }
}

pub fn linucb_default_params(instance: &ProblemInstance) -> Result<LinUcbParams> {
    LinUcbParams::at_bounds(
        norm2(instance.prior.mean()),
        instance.d,
        instance.k,
        instance.horizon as f64,
        instance.rho,
    )
}

/// LinUCB index choice over the full history in `acc`:
/// `argmax x^T theta_ridge + f(t) sqrt(x^T (Z + I)^-1 x)`.
pub fn linucb_act(
    acc: &CovarianceAccumulator,
    params: &LinUcbParams,
    horizon: usize,
    tuple: &ContextTuple,
) -> Result<usize> {
    let (theta, chol) = ridge_estimate(acc)?;
    let width = params.width_at(tuple.round, acc.dim(), horizon);
    argmax_available(tuple, |x| {
        check_len(theta.len(), x)?;
        let mean = dot(&theta, x);
        if width == 0.0 {
            return Ok(mean);
        }
        Ok(mean + width * chol.inverse_quad_form(x)?.sqrt())
    })
}

/// Result of one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: usize,
    /// Predicted action, for policies that also output one.
    pub prediction: Option<usize>,
}

impl Decision {
    fn act(action: usize) -> Self {
        Self {
            action,
            prediction: None,
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn decide(&mut self, tuple: &ContextTuple, rng: &mut dyn RngCore) -> Result<Decision>;

    /// Feedback for the executed action only.
    fn observe(&mut self, context: &[f64], reward: f64) -> Result<()>;
}

/// BatchBayesGreedy, BatchFreqGreedy, or the least-squares policy with a
/// Bayesian prediction rule, depending on the estimator.
#[derive(Debug, Clone)]
pub struct BatchGreedy {
    state: PolicyState,
}

impl BatchGreedy {
    pub fn new(d: usize, batch_size: usize, estimator: Estimator) -> Result<Self> {
        Ok(Self {
            state: PolicyState::new(d, BatchSchedule::new(batch_size)?, estimator)?,
        })
    }

    pub fn bayes(prior: Prior, batch_size: usize) -> Result<Self> {
        Self::new(prior.dim(), batch_size, Estimator::Bayes(prior))
    }

    pub fn freq(d: usize, batch_size: usize) -> Result<Self> {
        Self::new(d, batch_size, Estimator::Freq)
    }

    pub fn freq_with_prediction(prior: Prior, batch_size: usize) -> Result<Self> {
        Self::new(prior.dim(), batch_size, Estimator::FreqWithBayesPrediction(prior))
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }
}

impl Policy for BatchGreedy {
    fn name(&self) -> &'static str {
        match self.state.estimator {
            Estimator::Bayes(_) => "batch-bayes-greedy",
            Estimator::Freq => "batch-freq-greedy",
            Estimator::FreqWithBayesPrediction(_) => "freq-with-bayes-prediction",
        }
    }

    fn decide(&mut self, tuple: &ContextTuple, _rng: &mut dyn RngCore) -> Result<Decision> {
        match self.state.estimator {
            Estimator::Bayes(_) => bayes_greedy_act(&self.state, tuple).map(Decision::act),
            Estimator::Freq => freq_greedy_act(&self.state, tuple).map(Decision::act),
            Estimator::FreqWithBayesPrediction(_) => {
                let (action, predicted) = prediction_wrapper_act(&self.state, tuple)?;
                Ok(Decision {
                    action,
                    prediction: Some(predicted),
                })
            }
        }
    }

    fn observe(&mut self, context: &[f64], reward: f64) -> Result<()> {
        self.state.stage(context, reward)?;
        if self.state.batch_full() {
            self.state.commit_batch()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LinUcb {
    params: LinUcbParams,
    horizon: usize,
    history: CovarianceAccumulator,
}

impl LinUcb {
    pub fn new(d: usize, horizon: usize, params: LinUcbParams) -> Self {
        Self {
            params,
            horizon,
            history: CovarianceAccumulator::new(d),
        }
    }

    pub fn params(&self) -> &LinUcbParams {
        &self.params
    }

    pub fn history(&self) -> &CovarianceAccumulator {
        &self.history
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &'static str {
        "linucb"
    }

    fn decide(&mut self, tuple: &ContextTuple, _rng: &mut dyn RngCore) -> Result<Decision> {
        linucb_act(&self.history, &self.params, self.horizon, tuple).map(Decision::act)
    }

    fn observe(&mut self, context: &[f64], reward: f64) -> Result<()> {
        self.history.absorb(context, reward)
    }
}

/// Uniformly random available action.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn name(&self) -> &'static str {
        "random"
    }

    fn decide(&mut self, tuple: &ContextTuple, rng: &mut dyn RngCore) -> Result<Decision> {
        let available: Vec<usize> = tuple.available().map(|(a, _)| a).collect();
        if available.is_empty() {
            return Err(Error::EmptyTuple);
        }
        Ok(Decision::act(available[rng.random_range(0..available.len())]))
    }

    fn observe(&mut self, _context: &[f64], _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// Policy selection as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    BatchBayesGreedy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
    },
    BatchFreqGreedy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
    },
    FreqWithBayesPrediction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
    },
    Linucb {
        #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
        l: Option<f64>,
        #[serde(default, rename = "S", skip_serializing_if = "Option::is_none")]
        s: Option<f64>,
    },
    Random,
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::BatchBayesGreedy { .. } => "batch-bayes-greedy",
            PolicySpec::BatchFreqGreedy { .. } => "batch-freq-greedy",
            PolicySpec::FreqWithBayesPrediction { .. } => "freq-with-bayes-prediction",
            PolicySpec::Linucb { .. } => "linucb",
            PolicySpec::Random => "random",
        }
    }

    /// Batch size after resolving "auto" (unset) to `ceil(Y0)` capped at
    /// `auto_cap`; `None` for unbatched policies.
    pub fn resolved_batch_size(&self, instance: &ProblemInstance, auto_cap: usize) -> Result<Option<usize>> {
        let requested = match self {
            PolicySpec::BatchBayesGreedy { batch_size }
            | PolicySpec::BatchFreqGreedy { batch_size }
            | PolicySpec::FreqWithBayesPrediction { batch_size } => *batch_size,
            _ => return Ok(None),
        };
        let y = match requested {
            Some(0) => return Err(Error::Config("batch_size must be at least 1".into())),
            Some(y) => y,
            None => auto_batch_size(instance, auto_cap)?,
        };
        Ok(Some(y))
    }

    pub fn build(&self, instance: &ProblemInstance, auto_cap: usize) -> Result<Box<dyn Policy>> {
        let batch = self.resolved_batch_size(instance, auto_cap)?;
        let prior = || instance.prior.clone();
        Ok(match self {
            PolicySpec::BatchBayesGreedy { .. } => Box::new(BatchGreedy::bayes(prior(), batch.unwrap())?),
            PolicySpec::BatchFreqGreedy { .. } => Box::new(BatchGreedy::freq(instance.d, batch.unwrap())?),
            PolicySpec::FreqWithBayesPrediction { .. } => {
                Box::new(BatchGreedy::freq_with_prediction(prior(), batch.unwrap())?)
            }
            PolicySpec::Linucb { l, s } => Box::new(LinUcb::new(
                instance.d,
                instance.horizon,
                LinUcbParams::for_instance(instance, *l, *s)?,
            )),
            PolicySpec::Random => Box::new(UniformRandom),
        })
    }
}

/// `min(ceil(Y0), cap)` with `delta = T^-2`, never below 1.
pub fn auto_batch_size(instance: &ProblemInstance, cap: usize) -> Result<usize> {
    if cap == 0 {
        return Err(Error::Config("auto batch cap must be at least 1".into()));
    }
    let y0 = DiversityThresholds::for_instance(instance).y0;
    Ok((y0.ceil().max(1.0) as usize).min(cap))
}
