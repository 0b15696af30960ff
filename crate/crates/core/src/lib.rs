//! Multi-stage decentralized matching markets.
//!
//! Agents learn acceptance probabilities from past rounds, calibrate the
//! unknown state and pull arms down to a greedy cutoff on variational
//! utility. The crate includes the market engine, the learner, the
//! calibrators, baseline strategies, deferred acceptance and fairness and
//! welfare metrics.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod calibration;
pub mod error;
pub mod learning;
pub mod lub_cdm;
pub mod market;
pub mod metrics;
pub mod stats;
pub mod strategies;
pub mod variational;

pub use error::{Error, Result};
