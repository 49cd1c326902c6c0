//! Constrained online prediction under stationary ergodic processes.
//!
//! The strategy keeps a truncated grid of histogram experts, each of which
//! quantizes a sliding window of past observations on a nested dyadic
//! partition, collects the rounds whose quantized context matches, and plays
//! the regularized empirical saddle point of the instantaneous Lagrangian
//! over that sample. Two exponential-weights mixtures with learning rate
//! `1/sqrt(n)` aggregate the experts: one minimizes over decisions, the
//! other maximizes over the scalar dual, which keeps the long-run average
//! constraint loss at or below its threshold while the main loss approaches
//! the feasible optimum.
//!
//! The crate also ships seedable synthetic process generators and an
//! independent dual-bisection oracle for the feasible optimal value, so the
//! asymptotic claims can be checked empirically.

pub mod algorithm;
pub mod error;
pub mod experts;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod process;
pub mod saddle;
pub mod waa;

pub use error::{Error, Result};
