use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::runner::RegretTrace;
use crate::model::ProblemInstance;
use crate::oracle::DiversityThresholds;

/// One row of the gap table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gamma: f64,
    /// Empirical `Pr[gap <= gamma]` pooled over all recorded rounds.
    pub frequency: f64,
    /// `(K^2 / 2) gamma / (rho |theta| sqrt(pi))`, capped at 1 and averaged
    /// over replicates.
    pub bound: f64,
}

/// Upper bound on `Pr[gap <= gamma]` for a given `|theta|`, capped at 1.
pub fn gap_probability_bound(gamma: f64, k: usize, rho: f64, theta_norm: f64) -> f64 {
    let k = k as f64;
    let raw = 0.5 * k * k * gamma / (rho * theta_norm * std::f64::consts::PI.sqrt());
    if raw.is_nan() {
        1.0
    } else {
        raw.min(1.0)
    }
}

pub fn gap_histogram(traces: &[RegretTrace], gammas: &[f64], rho: f64, k: usize) -> Vec<GapRow> {
    let total: usize = traces.iter().map(|t| t.gaps.len()).sum();
    gammas
        .iter()
        .map(|&gamma| {
            let hits: usize = traces
                .iter()
                .map(|t| t.gaps.iter().filter(|&&g| g <= gamma).count())
                .sum();
            let bound = if traces.is_empty() {
                1.0
            } else {
                traces
                    .iter()
                    .map(|t| gap_probability_bound(gamma, k, rho, t.theta_norm))
                    .sum::<f64>()
                    / traces.len() as f64
            };
            GapRow {
                gamma,
                frequency: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
                bound,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub tau0: f64,
    /// Mean over replicates of `lambda_min(Z_T)`.
    pub mean_final_lambda_min: f64,
    pub final_bound: f64,
    /// Fraction of `(replicate, round)` pairs with `lambda_min >= bound`.
    pub fraction_above_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub policy: String,
    pub batch_size: Option<usize>,
    pub mean_cum_regret: Vec<f64>,
    pub stderr_cum_regret: Vec<f64>,
    pub mean_cum_pred_regret: Option<Vec<f64>>,
    pub stderr_cum_pred_regret: Option<Vec<f64>>,
    pub gap_table: Vec<GapRow>,
    pub diversity: Option<DiversitySummary>,
}

impl PolicySummary {
    pub fn final_regret(&self) -> f64 {
        self.mean_cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr_cum_regret.last().copied().unwrap_or(0.0)
    }
}

/// Aggregated Monte-Carlo output, echoing the effective config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub seed: u64,
    pub replicates: usize,
    pub horizon: usize,
    pub config: ExperimentConfig,
    pub policies: Vec<PolicySummary>,
}

/// Per-round mean and standard error (`sd / sqrt(M)`, zero for `M = 1`).
pub fn mean_and_stderr<'a>(curves: impl Iterator<Item = &'a [f64]> + Clone, len: usize) -> (Vec<f64>, Vec<f64>) {
    let m = curves.clone().count();
    let mut mean = vec![0.0; len];
    for c in curves.clone() {
        for (acc, v) in mean.iter_mut().zip(c) {
            *acc += v;
        }
    }
    if m == 0 {
        return (mean, vec![0.0; len]);
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut stderr = vec![0.0; len];
    if m > 1 {
        for c in curves {
            for ((acc, v), mu) in stderr.iter_mut().zip(c).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let denom = (m - 1) as f64 * m as f64;
        stderr.iter_mut().for_each(|v| *v = (*v / denom).sqrt());
    }
    (mean, stderr)
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

impl RegretReport {
    pub fn from_traces(
        config: &ExperimentConfig,
        instance: &ProblemInstance,
        traces: &[Vec<RegretTrace>],
    ) -> Result<Self> {
        if traces.len() != config.policies.len() {
            return Err(Error::Internal("one trace set per policy expected".into()));
        }
        let horizon = instance.horizon;
        let mut policies = Vec::with_capacity(traces.len());
        for (entry, runs) in config.policies.iter().zip(traces) {
            let (mean_cum_regret, stderr_cum_regret) =
                mean_and_stderr(runs.iter().map(|t| t.cum_regret.as_slice()), horizon);

            let pred_cum: Option<Vec<Vec<f64>>> =
                runs.iter().map(|t| t.pred_regret.as_deref().map(cumulative)).collect();
            let (mean_cum_pred_regret, stderr_cum_pred_regret) = match pred_cum {
                Some(curves) if !curves.is_empty() => {
                    let (m, s) = mean_and_stderr(curves.iter().map(Vec::as_slice), horizon);
                    (Some(m), Some(s))
                }
                _ => (None, None),
            };

            let diversity = summarize_diversity(instance, runs);
            policies.push(PolicySummary {
                label: entry.label().to_string(),
                policy: entry.spec.name().to_string(),
                batch_size: entry.spec.resolved_batch_size(instance, config.auto_batch_cap)?,
                mean_cum_regret,
                stderr_cum_regret,
                mean_cum_pred_regret,
                stderr_cum_pred_regret,
                gap_table: gap_histogram(runs, &config.outputs.gammas, instance.rho, instance.k),
                diversity,
            });
        }
        Ok(Self {
            seed: config.seed,
            replicates: config.replicates,
            horizon,
            config: config.clone(),
            policies,
        })
    }

    pub fn policy(&self, label: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.label == label)
    }
}

fn summarize_diversity(instance: &ProblemInstance, runs: &[RegretTrace]) -> Option<DiversitySummary> {
    // the bound divides by log T
    if instance.horizon < 2 {
        return None;
    }
    let points: Vec<_> = runs.iter().map(|t| t.diversity.as_ref()).collect::<Option<Vec<_>>>()?;
    if points.is_empty() || points[0].is_empty() {
        return None;
    }
    let total: usize = points.iter().map(|p| p.len()).sum();
    let above: usize = points
        .iter()
        .map(|p| p.iter().filter(|q| q.lambda_min >= q.bound).count())
        .sum();
    let finals: Vec<_> = points.iter().map(|p| *p.last().unwrap()).collect();
    Some(DiversitySummary {
        tau0: DiversityThresholds::for_instance(instance).tau0,
        mean_final_lambda_min: finals.iter().map(|p| p.lambda_min).sum::<f64>() / finals.len() as f64,
        final_bound: finals[0].bound,
        fraction_above_bound: above as f64 / total as f64,
    })
}
