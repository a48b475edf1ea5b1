//! Dynamic price setting for an energy community that learns how its members
//! respond to prices.
//!
//! A community manager posts hourly, member-specific prices each day. Every
//! member (prosumer) schedules its flexible assets against those prices, and
//! the manager observes the metered response. The manager's price-setting
//! problem embeds each asset model as a lower-level linear program, replaces
//! it by its optimality conditions, and solves the resulting mixed-integer
//! linear program in one shot. The unknown mixing weights that tie asset
//! models to each prosumer's metered load are learned online by Thompson
//! sampling with Gaussian beliefs.
//!
//! Module map:
//!
//! * [`signatures`] — asset models ("signatures") as declarative LP blocks,
//!   plus a direct LP solve used for simulation and testing.
//! * [`milp`] — solver-agnostic mixed-integer model, LP-format export, and
//!   the pluggable solver backend.
//! * [`bilevel`] — the single-level price-setting MILP: optimality conditions
//!   of every signature block, big-M complementarity, and the dual-side
//!   payment expressions.
//! * [`learner`] — Gaussian beliefs over signature weights, posterior
//!   updates, and shift detection.
//! * [`environment`] — simulated ground truth: hidden true weights and noisy
//!   daily responses.
//! * [`data`] — exogenous daily series (spot prices, weather, solar
//!   reference, baseloads): CSV ingestion and synthetic generation.
//! * [`metrics`] — regret, capacity-violation, and belief-convergence
//!   accounting.
//! * [`experiment`] — configuration, the daily learning loop, deterministic
//!   replay, and report/plot emission.
//!
//! The `examples/` directory shows one runnable program per capability; the
//! `priceloop` binary wraps the experiment runner in a thin CLI.

pub mod bilevel;
pub mod data;
pub mod environment;
pub mod experiment;
pub mod grid;
pub mod learner;
pub mod metrics;
pub mod milp;
pub mod signatures;

mod error;

pub use error::{Error, Result};
pub use grid::TimeGrid;
