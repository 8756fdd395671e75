//! Profit-maximizing workload distribution for geographically dispersed
//! green data centers.
//!
//! Each data center serves several SLA classes from two queues per class: a
//! green queue powered by local renewable energy and a brown queue powered by
//! grid electricity bought at a location-dependent price. Per time slot the
//! [`optimizer`] chooses how much of every class to send to each queue and at
//! what service rate, using the G/D/1 deadline-loss model from [`loss`] and the
//! power/profit accounting from [`power`]. The [`simulator`] replays multi-slot
//! traces and compares against baselines; [`validation`] holds independent
//! oracles (Monte Carlo queue, brute-force grid search, convexity audit).

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod error;
pub mod loss;
pub mod optimizer;
pub mod power;
pub mod simulator;
pub mod validation;

pub use allocation::{Allocation, QueueKind};
pub use error::{Error, Result};
