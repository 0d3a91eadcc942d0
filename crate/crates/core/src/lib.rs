//! Optimal exponential-moving-average trading strategies under
//! Ornstein-Uhlenbeck and two-state Markov-chain drifts, plus a seeded Monte
//! Carlo backtester with proportional transaction costs.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctmc_analytics;
pub mod ctmc_filter;
pub mod error;
pub mod experiments;
pub mod expsum;
pub mod metrics;
pub mod models;
pub mod ou_analytics;
pub mod quadrature;
pub mod simulator;
pub mod special;

pub use error::{Error, ErrorClass, Result};
pub use models::{
    period_to_lambda, validate, CtmcDrift, DriftModel, ModelParams, OuDrift, SimConfig,
    StrategySpec, DEFAULT_SEED, ONE_DAY,
};
