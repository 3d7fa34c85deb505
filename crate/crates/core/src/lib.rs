//! Linear contextual bandits with perturbed (smoothed) contexts.
//!
//! - [`model`]: problem instances, context generation, rewards.
//! - [`linalg`]: covariance accumulation, estimators, Jacobi eigenvalues.
//! - [`policy`]: batched greedy policies, LinUCB, uniform random.
//! - [`oracle`]: reward simulation from batch histories, diversity thresholds.
//! - [`harness`]: Monte-Carlo regret estimation, CSV/JSON output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
