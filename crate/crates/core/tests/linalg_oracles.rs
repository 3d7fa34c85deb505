//! Estimators and eigen-solvers checked against independent reference
//! computations.
#![allow(clippy::needless_range_loop)]

use bandit_lab::linalg::{
    min_eigenvalue, ols_estimate, posterior_mean, symmetric_eigen, Cholesky, CovarianceAccumulator, Matrix,
};
use bandit_lab::model::Prior;
use proptest::prelude::*;

mod common;
use common::gauss_solve;

/// Number of eigenvalues of symmetric `a` below `lambda`, from the signs of
/// the `LDL^T` pivots of `a - lambda I` (Sylvester's law of inertia).
fn count_below(a: &[Vec<f64>], lambda: f64) -> usize {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut p = m[k][k];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / p;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    negatives
}

/// `i`-th smallest eigenvalue (0-based) by bisection on the inertia count.
fn bisect_eigenvalue(a: &[Vec<f64>], i: usize) -> f64 {
    let bound: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt() + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(a, mid) > i {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn symmetric(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| {
        let a = Matrix::from_rows(&v.chunks(n).collect::<Vec<_>>()).unwrap();
        a.add(&a.transpose()).unwrap().scale(0.5)
    })
}

fn history(d: usize, n: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec((prop::collection::vec(-1.5..1.5f64, d), -3.0..3.0f64), n)
}

fn accumulate(rows: &[(Vec<f64>, f64)], d: usize) -> CovarianceAccumulator {
    let mut acc = CovarianceAccumulator::new(d);
    for (x, r) in rows {
        acc.absorb(x, *r).unwrap();
    }
    acc
}

proptest! {
    #[test]
    fn jacobi_matches_inertia_bisection(m in (1usize..6).prop_flat_map(symmetric)) {
        let eig = symmetric_eigen(&m).unwrap();
        let rows = to_rows(&m);
        for (i, &lambda) in eig.values.iter().enumerate() {
            let reference = bisect_eigenvalue(&rows, i);
            prop_assert!((lambda - reference).abs() <= 1e-9 * (1.0 + reference.abs()),
                "eigenvalue {i}: {lambda} vs {reference}");
        }
    }

    #[test]
    fn rayleigh_quotient_within_spectrum(
        m in (1usize..6).prop_flat_map(symmetric),
        seed in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let n = m.rows();
        let v = &seed[..n];
        let vv: f64 = v.iter().map(|x| x * x).sum();
        prop_assume!(vv > 1e-6);
        let report = min_eigenvalue(&m).unwrap();
        let q = m.quad_form(v).unwrap() / vv;
        let tol = 1e-9 * (1.0 + m.max_abs());
        prop_assert!(report.lambda_min <= q + tol);
        prop_assert!(q <= report.lambda_max + tol);
    }

    #[test]
    fn eigenvalues_preserve_trace(m in (1usize..6).prop_flat_map(symmetric)) {
        let eig = symmetric_eigen(&m).unwrap();
        let sum: f64 = eig.values.iter().sum();
        prop_assert!((sum - m.trace()).abs() <= 1e-9 * (1.0 + m.max_abs()));
    }

    #[test]
    fn ols_matches_normal_equations(
        (d, rows) in (1usize..5).prop_flat_map(|d| (Just(d), (d + 2..d + 12).prop_flat_map(move |n| history(d, n))))
    ) {
        let acc = accumulate(&rows, d);
        prop_assume!(min_eigenvalue(acc.z()).unwrap().lambda_min > 1e-3);
        let ours = ols_estimate(&acc).unwrap();
        let reference = gauss_solve(&to_rows(acc.z()), acc.xr());
        for (a, b) in ours.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "{ours:?} vs {reference:?}");
        }
    }

    #[test]
    fn ols_is_minimum_norm_on_a_line(
        u in prop::collection::vec(-1.0..1.0f64, 3),
        scales in prop::collection::vec((-2.0..2.0f64, -3.0..3.0f64), 1..8),
    ) {
        let uu: f64 = u.iter().map(|x| x * x).sum();
        prop_assume!(uu > 1e-2);
        let ss: f64 = scales.iter().map(|(s, _)| s * s).sum();
        prop_assume!(ss * uu > 1e-2);
        let mut acc = CovarianceAccumulator::new(3);
        for (s, r) in &scales {
            let x: Vec<f64> = u.iter().map(|v| s * v).collect();
            acc.absorb(&x, *r).unwrap();
        }
        // rank one: the minimum-norm solution is c u with c = (sum s r) / (|u|^2 sum s^2)
        let sr: f64 = scales.iter().map(|(s, r)| s * r).sum();
        let c = sr / (uu * ss);
        let est = ols_estimate(&acc).unwrap();
        for (e, v) in est.iter().zip(&u) {
            prop_assert!((e - c * v).abs() <= 1e-7 * (1.0 + c.abs()), "{est:?} vs {c} * {u:?}");
        }
    }

    #[test]
    fn posterior_identity(d in 1usize..4, extra in 0usize..6, data in history(4, 12),
                          mean in prop::collection::vec(-2.0..2.0f64, 4), var in 0.1..5.0f64) {
        let rows: Vec<_> = data.iter().take(d + 2 + extra).map(|(x, r)| (x[..d].to_vec(), *r)).collect();
        let acc = accumulate(&rows, d);
        prop_assume!(min_eigenvalue(acc.z()).unwrap().lambda_min > 1e-3);
        let prior = Prior::isotropic(mean[..d].to_vec(), var).unwrap();
        let bay = posterior_mean(&prior, &acc).unwrap();
        let fmt = ols_estimate(&acc).unwrap();
        // theta_bay - theta_fmt = (Z + P)^-1 P (theta_bar - theta_fmt), P the prior precision
        let diff: Vec<f64> = prior.mean().iter().zip(&fmt).map(|(a, b)| a - b).collect();
        let rhs = prior.precision().mul_vec(&diff).unwrap();
        let expected = Cholesky::new(&acc.z().add(prior.precision()).unwrap()).unwrap().solve(&rhs).unwrap();
        for i in 0..d {
            prop_assert!((bay[i] - fmt[i] - expected[i]).abs() <= 1e-8 * (1.0 + expected[i].abs()));
        }
    }

    #[test]
    fn scalar_posterior_between_prior_and_ols(
        data in history(1, 10),
        mean in -3.0..3.0f64,
        var in 0.01..10.0f64,
    ) {
        let acc = accumulate(&data, 1);
        prop_assume!(acc.z()[(0, 0)] > 1e-6);
        let prior = Prior::isotropic(vec![mean], var).unwrap();
        let bay = posterior_mean(&prior, &acc).unwrap()[0];
        let fmt = ols_estimate(&acc).unwrap()[0];
        let (lo, hi) = if mean < fmt { (mean, fmt) } else { (fmt, mean) };
        prop_assert!(bay >= lo - 1e-12 && bay <= hi + 1e-12, "{bay} not in [{lo}, {hi}]");
        // closed form for d = 1
        let z = acc.z()[(0, 0)];
        let closed = (acc.xr()[0] + mean / var) / (z + 1.0 / var);
        prop_assert!((bay - closed).abs() <= 1e-10 * (1.0 + closed.abs()));
    }
}

#[test]
fn empty_history_estimates() {
    let acc = CovarianceAccumulator::new(3);
    assert_eq!(ols_estimate(&acc).unwrap(), vec![0.0; 3]);
    let prior = Prior::isotropic(vec![0.5, -1.0, 2.0], 3.0).unwrap();
    assert_eq!(posterior_mean(&prior, &acc).unwrap(), vec![0.5, -1.0, 2.0]);
}

#[test]
fn eigen_of_known_matrix() {
    // eigenvalues 1, 2, 4 by construction: Q diag Q^T with a Householder Q
    let v = [1.0 / 3.0_f64.sqrt(); 3];
    let q: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j])
                .collect()
        })
        .collect();
    let q = Matrix::from_rows(&q).unwrap();
    let m = q
        .matmul(&Matrix::from_diag(&[4.0, 1.0, 2.0]))
        .unwrap()
        .matmul(&q.transpose())
        .unwrap();
    let eig = symmetric_eigen(&m).unwrap();
    for (got, want) in eig.values.iter().zip([1.0, 2.0, 4.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}
