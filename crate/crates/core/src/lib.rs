//! Progression-rate modelling for longitudinal motor-score cohorts.
//!
//! The pipeline reads a cohort of per-subject clinical measures and repeated
//! gait/sway device measures, derives seven feature sets, and evaluates two
//! regressor families (gradient-boosted trees and feedforward networks) with
//! nested, stratified cross-validation over randomly sampled hyperparameters.
//! Scoring covers R², positive predictive value on fast progressors,
//! permutation importance and a paired t-test on visit scores.
//!
//! Trial evaluation runs on a rayon pool when the `parallel` feature is on
//! (the default); every result is a pure function of its derived seed, so
//! output does not depend on the worker count.

pub mod cohort;
pub mod commands;
pub mod error;
pub mod exec;
pub mod featureset;
pub mod gbt;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod search;
pub mod seed;
pub mod synthcohort;

pub use error::{Error, Result};
pub use matrix::Matrix;
