//! Structured log-odds models for paired-comparison outcome prediction.
//!
//! The crate provides the Bradley-Terry-Élő model family (rank-2, two-factor,
//! rank-four, covariate, ordinal and score-difference variants), batch,
//! on-line and two-stage likelihood training, nuclear-norm-regularized
//! log-odds estimation, Poisson score baselines, a temporal validation
//! harness with statistical comparison machinery, synthetic experiment
//! generators, and Monte Carlo season-ranking simulation.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod links;
pub mod model;
pub mod regularize;
pub mod rng;
pub mod season;
pub mod special;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
