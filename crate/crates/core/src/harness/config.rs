//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! replicates = 200
//!
//! [instance]
//! d = 2
//! k = 5
//! horizon = 10000
//! rho = 0.2
//!
//! [instance.prior]
//! mean = [0.0, 0.0]
//! variance = 1.0            # or covariance = [[..], [..]]
//!
//! [instance.contexts]
//! kind = "uniform-sphere"   # "fixed-means" with `means`, "from-file" with `path`
//!
//! [[policies]]
//! name = "batch-bayes-greedy"
//! batch_size = 200          # omit for min(ceil(Y0), auto_batch_cap)
//!
//! [outputs]
//! csv = "traces.csv"
//! json = "report.json"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{MeanContextDistribution, MeanKind, Prior, ProblemInstance};
use crate::policy::PolicySpec;

pub const DEFAULT_AUTO_BATCH_CAP: usize = 200;
pub const DEFAULT_GAMMAS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_auto_cap")]
    pub auto_batch_cap: usize,
    pub instance: InstanceConfig,
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_auto_cap() -> usize {
    DEFAULT_AUTO_BATCH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub d: usize,
    pub k: usize,
    pub horizon: usize,
    pub rho: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub prior: PriorConfig,
    pub contexts: ContextConfig,
}

fn default_noise_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<f64>,
    /// Isotropic covariance `variance * I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Availability {
    Uniform(f64),
    PerAction(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    pub kind: MeanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    /// Means file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<Availability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    #[serde(flatten)]
    pub spec: PolicySpec,
    /// Name used in outputs; defaults to the policy name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PolicyEntry {
    pub fn new(spec: PolicySpec) -> Self {
        Self { spec, label: None }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.spec.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    /// Record `lambda_min(Z_t)` every round.
    #[serde(default)]
    pub diversity: bool,
    /// Record `|theta_bay - theta_fmt|` on the executed history every round.
    #[serde(default)]
    pub estimate_gap: bool,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_gammas() -> Vec<f64> {
    DEFAULT_GAMMAS.to_vec()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            json: None,
            diversity: false,
            estimate_gap: false,
            gammas: default_gammas(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config; a relative means-file path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(p) = config.instance.contexts.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        config.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        if self.auto_batch_cap == 0 {
            return Err(Error::Config("auto_batch_cap must be at least 1".into()));
        }
        for p in &self.policies {
            if let PolicySpec::BatchBayesGreedy { batch_size: Some(0) }
            | PolicySpec::BatchFreqGreedy { batch_size: Some(0) }
            | PolicySpec::FreqWithBayesPrediction { batch_size: Some(0) } = p.spec
            {
                return Err(Error::Config(format!("{}: batch_size must be at least 1", p.label())));
            }
        }
        if self.outputs.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("gammas must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<ProblemInstance> {
        self.instance.build(self.strict)
    }
}

impl InstanceConfig {
    pub fn build(&self, strict: bool) -> Result<ProblemInstance> {
        let d = self.d;
        if self.prior.mean.len() != d {
            return Err(Error::Config(format!(
                "prior mean has length {} but d = {d}",
                self.prior.mean.len()
            )));
        }
        let covariance = match (&self.prior.variance, &self.prior.covariance) {
            (Some(v), None) => Matrix::scaled_identity(d, *v),
            (None, Some(rows)) => Matrix::from_rows(rows)?,
            (None, None) => Matrix::identity(d),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either prior.variance or prior.covariance, not both".into(),
                ))
            }
        };
        let prior = Prior::new(self.prior.mean.clone(), covariance)?;

        let c = &self.contexts;
        let mut dist = match c.kind {
            MeanKind::UniformSphere => MeanContextDistribution::uniform_sphere(self.k, d)?,
            MeanKind::FixedMeans => {
                let rows = c
                    .means
                    .as_ref()
                    .ok_or_else(|| Error::Config("fixed-means contexts need `means`".into()))?;
                MeanContextDistribution::fixed(Matrix::from_rows(rows)?)?
            }
            MeanKind::FromFile => {
                let path = c
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("from-file contexts need `path`".into()))?;
                MeanContextDistribution::from_file(path)?
            }
        };
        if dist.num_actions() != self.k || dist.dim() != d {
            return Err(Error::Config(format!(
                "mean contexts are {}x{} but k = {}, d = {d}",
                dist.num_actions(),
                dist.dim(),
                self.k
            )));
        }
        if let Some(avail) = &c.availability {
            let probs = match avail {
                Availability::Uniform(p) => vec![*p; self.k],
                Availability::PerAction(v) => v.clone(),
            };
            dist = dist.with_availability(probs)?;
        }
        ProblemInstance::new(prior, dist, self.rho, self.horizon, strict)?.with_noise_sd(self.noise_sd)
    }
}

/// Default desk-scale instance: d = 2, K = 5, rho = 0.2, T = 10^4, standard
/// normal prior, uniform-sphere mean contexts.
pub fn default_instance_config() -> InstanceConfig {
    InstanceConfig {
        d: 2,
        k: 5,
        horizon: 10_000,
        rho: 0.2,
        noise_sd: 1.0,
        prior: PriorConfig {
            mean: vec![0.0, 0.0],
            variance: Some(1.0),
            covariance: None,
        },
        contexts: ContextConfig {
            kind: MeanKind::UniformSphere,
            means: None,
            path: None,
            availability: None,
        },
    }
}

pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 20_240_601,
        replicates: 200,
        strict: false,
        auto_batch_cap: DEFAULT_AUTO_BATCH_CAP,
        instance: default_instance_config(),
        policies: vec![
            PolicyEntry::new(PolicySpec::BatchBayesGreedy { batch_size: None }),
            PolicyEntry::new(PolicySpec::BatchFreqGreedy { batch_size: None }),
            PolicyEntry::new(PolicySpec::Linucb { l: None, s: None }),
        ],
        outputs: OutputConfig::default(),
    }
}
