//! Episodic contextual bandits with stochastic experts.
//!
//! An agent repeatedly picks one of `N` fixed stochastic experts. The chosen
//! expert draws an action from its conditional distribution given the observed
//! context, and the agent sees a reward in `[0, 1]`. Context and reward laws
//! change between episodes while the experts stay fixed.
//!
//! This crate holds the algorithmic core and performs no IO:
//!
//! - [`instance`]: environment model, assumption checks, synthetic generation.
//! - [`divergence`]: importance ratios with confidence sandwiches, f₁-divergence
//!   constants and the `w` inverse used for clip levels.
//! - [`estimator`]: the incremental clipped importance-sampling estimator and
//!   its naive reference implementation.
//! - [`agents`]: ED-UCB, D-UCB, UCB1 and KL-UCB behind the [`Agent`] trait.
//! - [`bootstrap`]: sample-size calculators, offline sampling and empirical
//!   expert construction.
//! - [`analysis`]: problem-dependent analysis times.
//! - [`sim`]: the per-run episodic loop with pseudo-regret accounting.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod agents;
pub mod analysis;
pub mod bootstrap;
pub mod divergence;
pub mod error;
pub mod estimator;
pub mod instance;
pub mod sim;

mod sampling;

pub use agents::{Agent, AgentConfig, AgentKind, ExplorationFn, Observation};
pub use divergence::{DivergenceMode, DivergenceTable, RatioTables};
pub use error::{Error, Result};
pub use instance::{EpisodeModel, Instance, InstanceParams, PolicyTable, ProblemDims};
