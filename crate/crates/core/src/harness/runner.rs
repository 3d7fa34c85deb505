use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::report::RegretReport;
use crate::linalg::{dot, norm2, ols_estimate, posterior_mean, CovarianceAccumulator};
use crate::model::{generate_context_tuple, realize_reward, ContextTuple, ProblemInstance};
use crate::oracle::{DiversityPoint, DiversityTracker};
use crate::policy::Policy;
use crate::rng::{ReplicateStreams, SeedTree};
use rand::RngCore;

/// Optional per-round diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_diversity: bool,
    pub record_estimate_gap: bool,
}

/// Per-round record of one replicate of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub label: String,
    pub replicate: u64,
    pub theta_norm: f64,
    /// `theta^T x* - theta^T x_{a_t}`.
    pub inst_regret: Vec<f64>,
    pub cum_regret: Vec<f64>,
    /// Same, for the predicted action.
    pub pred_regret: Option<Vec<f64>>,
    /// Best minus second-best expected reward; infinite when only one action
    /// is available.
    #[serde(skip)]
    pub gaps: Vec<f64>,
    pub diversity: Option<Vec<DiversityPoint>>,
    /// `|theta_bay - theta_fmt|` on the history through round t.
    pub estimate_gap: Option<Vec<f64>>,
    /// Digest of the environment draws (contexts and reward-noise seeds).
    pub env_digest: u64,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.inst_regret.len()
    }

    pub fn total_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// `(best action, best value, second-best value)` under the true parameter.
fn best_two(theta: &[f64], tuple: &ContextTuple) -> Result<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::NEG_INFINITY;
    for (a, x) in tuple.available() {
        let v = dot(theta, x);
        match best {
            Some((_, b)) if v <= b => second = second.max(v),
            Some((_, b)) => {
                second = b;
                best = Some((a, v));
            }
            None => best = Some((a, v)),
        }
    }
    let (a, b) = best.ok_or(Error::EmptyTuple)?;
    Ok((a, b, second))
}

/// Runs one replicate: draws theta, then plays `T` rounds with bandit
/// feedback. The environment depends only on `streams`, never on the policy.
pub fn run_replicate(
    instance: &ProblemInstance,
    policy: &mut dyn Policy,
    label: &str,
    streams: &ReplicateStreams,
    options: RunOptions,
) -> Result<RegretTrace> {
    let horizon = instance.horizon;
    let theta = instance.prior.sample(&mut streams.theta());
    let mut policy_rng = streams.policy();

    let mut inst_regret = Vec::with_capacity(horizon);
    let mut cum_regret = Vec::with_capacity(horizon);
    let mut pred_regret: Option<Vec<f64>> = None;
    let mut gaps = Vec::with_capacity(horizon);
    let mut diversity = options.record_diversity.then(|| {
        (
            DiversityTracker::new(instance.d, instance.rho, horizon),
            Vec::with_capacity(horizon),
        )
    });
    let mut estimate_gap = options
        .record_estimate_gap
        .then(|| (CovarianceAccumulator::new(instance.d), Vec::with_capacity(horizon)));
    let mut digest = Fnv::new();
    let mut total = 0.0;

    for t in 1..=horizon {
        let tuple = generate_context_tuple(instance, t, &mut streams.context(t));
        let mut reward_rng = streams.reward(t);
        for x in tuple.contexts.iter() {
            match x {
                Some(x) => x.iter().for_each(|v| digest.word(v.to_bits())),
                None => digest.word(u64::MAX),
            }
        }
        digest.word(reward_rng.clone().next_u64());

        let (_, best_value, second_value) = best_two(&theta, &tuple)?;
        gaps.push(best_value - second_value);

        let decision = policy.decide(&tuple, &mut policy_rng)?;
        let x = tuple
            .get(decision.action)
            .ok_or_else(|| Error::Internal(format!("policy chose unavailable action {}", decision.action)))?
            .to_vec();
        let regret = best_value - dot(&theta, &x);
        total += regret;
        inst_regret.push(regret);
        cum_regret.push(total);

        if let Some(predicted) = decision.prediction {
            let xp = tuple
                .get(predicted)
                .ok_or_else(|| Error::Internal(format!("policy predicted unavailable action {predicted}")))?;
            pred_regret
                .get_or_insert_with(|| Vec::with_capacity(horizon))
                .push(best_value - dot(&theta, xp));
        }

        let reward = realize_reward(&theta, &x, instance.noise_sd, &mut reward_rng)?;
        policy.observe(&x, reward)?;

        if let Some((tracker, points)) = diversity.as_mut() {
            points.push(tracker.push(&x)?);
        }
        if let Some((acc, gaps_out)) = estimate_gap.as_mut() {
            acc.absorb(&x, reward)?;
            let bay = posterior_mean(&instance.prior, acc)?;
            let fmt = ols_estimate(acc)?;
            let diff: Vec<f64> = bay.iter().zip(&fmt).map(|(a, b)| a - b).collect();
            gaps_out.push(norm2(&diff));
        }
    }

    if pred_regret.as_ref().is_some_and(|p| p.len() != horizon) {
        return Err(Error::Internal("prediction recorded on only some rounds".into()));
    }

    Ok(RegretTrace {
        label: label.to_string(),
        replicate: streams.index(),
        theta_norm: norm2(&theta),
        inst_regret,
        cum_regret,
        pred_regret,
        gaps,
        diversity: diversity.map(|(_, p)| p),
        estimate_gap: estimate_gap.map(|(_, g)| g),
        env_digest: digest.0,
    })
}

/// Traces of every policy entry over every replicate.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub report: RegretReport,
    /// `traces[p][m]`: policy entry `p`, replicate `m`.
    pub traces: Vec<Vec<RegretTrace>>,
}

impl ExperimentResult {
    pub fn all_traces(&self) -> impl Iterator<Item = &RegretTrace> {
        self.traces.iter().flatten()
    }
}

/// Monte-Carlo estimate of Bayesian regret for every configured policy, with
/// common random numbers across policies. Replicates run in parallel; results
/// are ordered by replicate index.
pub fn estimate_bayesian_regret(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let instance = config.build_instance()?;
    if config.replicates < 30 {
        log::warn!(
            "{} replicates; standard errors are unreliable below 30",
            config.replicates
        );
    }
    let options = RunOptions {
        record_diversity: config.outputs.diversity,
        record_estimate_gap: config.outputs.estimate_gap,
    };
    let tree = SeedTree::new(config.seed);

    let mut traces = Vec::with_capacity(config.policies.len());
    for entry in &config.policies {
        // surface config errors before spawning work
        entry.spec.build(&instance, config.auto_batch_cap)?;
        let label = entry.label();
        let per_policy = (0..config.replicates as u64)
            .into_par_iter()
            .map(|m| {
                let mut policy = entry.spec.build(&instance, config.auto_batch_cap)?;
                run_replicate(&instance, policy.as_mut(), label, &tree.replicate(m), options)
            })
            .collect::<Result<Vec<_>>>()?;
        traces.push(per_policy);
    }

    let report = RegretReport::from_traces(config, &instance, &traces)?;
    Ok(ExperimentResult { report, traces })
}
