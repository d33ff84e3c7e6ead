//! Prediction-based antibiotic prescription policies.
//!
//! The crate generates or ingests consultation cohorts, fits random-forest
//! bacterial risk models on expanding windows, optimizes two-threshold
//! prescription rules under a one-sided constraint and evaluates them ex post
//! and ex ante with bootstrap intervals.

pub mod cli;
pub mod cohort;
pub mod config;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod optimizer;
pub mod policy;
pub mod report;
pub mod rolling;
pub mod seed;

pub use error::{Error, Result};
