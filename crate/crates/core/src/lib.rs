//! Greedy policy search for test-time augmentation.
//!
//! The pipeline has four stages:
//!
//! 1. [`policy`] samples a pool of candidate sub-policies (chains of
//!    parametric [`imageops`] transforms with frozen magnitudes).
//! 2. [`predcache`] runs a frozen classifier on every candidate and stores one
//!    probability matrix per sub-policy.
//! 3. [`gps`] greedily composes a policy by repeatedly adding the candidate
//!    that maximizes the validation objective of the running prediction mean,
//!    by default the temperature-[`calibrate`]d log-likelihood.
//! 4. [`calibrate`] and [`metrics`] score policies, including the
//!    corruption-robustness errors.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

pub mod calibrate;
pub mod demo;
pub mod error;
pub mod gps;
pub mod imageops;
pub mod metrics;
pub mod policy;
pub mod predcache;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Prediction matrix in double precision, the working type of the search.
pub type PredictionMatrix64 = predcache::PredictionMatrix<f64>;
/// Prediction matrix in single precision, the storage type of cache files.
pub type PredictionMatrix32 = predcache::PredictionMatrix<f32>;
pub type Temperature64 = calibrate::Temperature<f64>;
pub type MetricReport64 = calibrate::MetricReport<f64>;
pub type CorruptionErrorTable64 = metrics::CorruptionErrorTable<f64>;
