//! Admission control for multiclass, no-buffer, multi-server queues.
//!
//! Tasks of several classes arrive over a finite horizon according to
//! inhomogeneous Poisson processes. Each task carries a random price and an
//! exponentially distributed service time; the operator decides on arrival
//! whether to commit a server to it, collecting the price only if the task
//! completes before the horizon. This crate provides:
//!
//! * [`domain`] — problem instances: task classes, arrival-rate functions,
//!   price distributions, and the enumeration of busy-server combinations.
//! * [`solver`] — exact finite-horizon backward induction producing reject
//!   values and per-class critical-price thresholds for every epoch.
//! * [`stationary`] — the average-reward solution of the constant-rate
//!   variant, solved by relative value iteration after uniformization.
//! * [`abstraction`] — state aggregation of combinations (k-means over
//!   stationary-solution or order-statistics features, or random), abstract
//!   backward induction, and lifting the abstract policy back to the ground
//!   problem.
//! * [`baselines`] — comparison policies: average-class value iteration,
//!   stationary thresholds, and grid-searched proportional thresholds.
//! * [`sim`] — a continuous-time discrete-event simulator that evaluates any
//!   admission policy over seeded, reproducible episodes.
//!
//! With the default `parallel` feature, per-epoch backups, episode batches,
//! feature extraction, k-means restarts, and grid-search candidates run on a
//! rayon pool; `--no-default-features` builds a fully sequential crate with
//! the same API and identical numeric results.

pub mod abstraction;
pub mod baselines;
pub mod domain;
mod parallel;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod stationary;
