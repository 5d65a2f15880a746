//! Online kernel regression when the kernel is only available through
//! sampling of random features.
//!
//! The centerpiece is the shrinking-gradient online learner: gradient steps
//! driven by a two-stage importance-sampled estimate of the scalar product
//! `<f, psi_x>`, with a multiplicative shrink replacing projection whenever
//! the estimate grows past a norm-bound threshold. Around it sit exact-kernel
//! oracles, reference baselines (exact-kernel OGD, a doubly-stochastic
//! functional SGD), seeded synthetic data streams, and a benchmark harness.

// Validation uses `!(x > 0.0)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod error;
pub mod estimator;
pub mod feature_space;
pub mod learner;
pub mod rng;
pub mod synthetic;
pub mod telemetry;

pub use error::{Error, Result};
pub use estimator::{est_scalar_prod, required_test_samples, tail_bound, Coefficients, Estimate, Hypothesis};
pub use feature_space::{Example, FamilySpec, FeatureFamily, Weight};
pub use learner::{theorem_schedule, LearnerConfig, LearnerState};
pub use rng::RngStream;
pub use telemetry::{Counters, RoundRecord, RunSummary};
