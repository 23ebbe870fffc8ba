//! Tracking aggregates over a dynamic database that is reachable only through
//! a restrictive top-k conjunctive search interface.
//!
//! The crate has three layers:
//!
//! - [`model`] and [`sim`]: the database itself — schema, tuples, the exact
//!   ground-truth oracle, and a simulator of the top-k search interface with
//!   per-round query budgets and configurable update schedules.
//! - [`tree`] and [`estimators`]: the query-tree abstraction (drill-downs,
//!   roll-ups, selection probabilities) and the three tracking estimators
//!   built on it — restart, reissue, and the adaptive reservoir-style
//!   estimator with bootstrapped budget allocation.
//! - [`harness`]: dataset generation/loading, experiment orchestration, and
//!   CSV metrics output for benchmarking the estimators against the oracle.

pub mod estimators;
pub mod harness;
pub mod model;
pub mod sim;
pub mod tree;
