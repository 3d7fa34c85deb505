//! Statistical self-check of the reward-simulation oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::model::MeanContextDistribution;
use crate::oracle::{simulate_reward, simulation_weights, BatchRecord};
use crate::rng::{Purpose, SeedTree};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and
/// `N(mean, sd^2)`. Sorts `samples` in place.
pub fn ks_statistic_normal(samples: &mut [f64], mean: f64, sd: f64) -> Result<f64> {
    let normal = Normal::new(mean, sd).map_err(|e| Error::Internal(e.to_string()))?;
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max))
}

/// A batch of `y` perturbed unit-sphere contexts in dimension `d`.
pub fn random_batch_contexts(y: usize, d: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let dist = MeanContextDistribution::uniform_sphere(y, d)?;
    let rows: Vec<Vec<f64>> = dist
        .sample(rng)
        .into_iter()
        .flatten()
        .map(|mu| {
            mu.into_iter()
                .map(|m| m + rho * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows)
}

pub const DRAWS: usize = 100_000;

/// Moments and KS distance of `g(x, h_B)` over joint redraws of batch reward
/// noise and oracle noise, plus reconstruction and norm identities over
/// random batches.
pub fn verify_simulation_oracle(seed: u64) -> Result<Vec<CheckOutcome>> {
    let tree = SeedTree::new(seed);
    let mut setup = tree.stream(0, Purpose::Auxiliary, 0);
    let (y, d, rho, sigma) = (20, 3, 0.2, 1.0);
    let contexts = random_batch_contexts(y, d, rho, &mut setup)?;
    let theta: Vec<f64> = (0..d).map(|_| setup.sample(StandardNormal)).collect();

    // x along a random direction, scaled so that |w_B|^2 = 1/2
    let dir: Vec<f64> = (0..d).map(|_| setup.sample(StandardNormal)).collect();
    let z = contexts.gram();
    let q = Cholesky::new(&z)?.inverse_quad_form(&dir)?;
    let x: Vec<f64> = dir.iter().map(|v| v * (0.5 / q).sqrt()).collect();
    let mean_rewards = contexts.mul_vec(&theta)?;
    let target = dot(&theta, &x);

    let mut rng = tree.stream(0, Purpose::Auxiliary, 1);
    let mut samples = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let rewards = mean_rewards
            .iter()
            .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let batch = BatchRecord::new(contexts.clone(), rewards)?;
        samples.push(simulate_reward(&batch, &x, sigma, &mut rng)?);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let ks = ks_statistic_normal(&mut samples, target, sigma)?;

    let mut out = vec![
        CheckOutcome {
            name: "simulated reward mean",
            passed: (mean - target).abs() <= 0.02,
            detail: format!("mean {mean:.5} vs theta^T x {target:.5} (tol 0.02)"),
        },
        CheckOutcome {
            name: "simulated reward variance",
            passed: (var - sigma * sigma).abs() <= 0.05 * sigma * sigma,
            detail: format!("variance {var:.5} vs {:.5} (tol 5%)", sigma * sigma),
        },
        CheckOutcome {
            name: "simulated reward KS distance",
            passed: ks < 0.01,
            detail: format!("KS {ks:.5} (< 0.01)"),
        },
    ];

    let mut rng = tree.stream(0, Purpose::Auxiliary, 2);
    let (mut worst_recon, mut worst_norm) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let xb = random_batch_contexts(y, d, rho, &mut rng)?;
        let batch = BatchRecord::new(xb, vec![0.0; y])?;
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let w = simulation_weights(&batch, &x)?;
        let back = batch.contexts().tmul_vec(&w)?;
        worst_recon = worst_recon.max(back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let quad = Cholesky::new(batch.covariance())?.inverse_quad_form(&x)?;
        worst_norm = worst_norm.max((dot(&w, &w) - quad).abs());
    }
    out.push(CheckOutcome {
        name: "reconstruction X_B^T w_B = x",
        passed: worst_recon <= 1e-8,
        detail: format!("max error {worst_recon:.1e} over 1000 batches"),
    });
    out.push(CheckOutcome {
        name: "norm identity |w_B|^2 = x^T Z_B^-1 x",
        passed: worst_norm <= 1e-8,
        detail: format!("max error {worst_norm:.1e} over 1000 batches"),
    });
    Ok(out)
}
