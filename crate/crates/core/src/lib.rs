//! Monte Carlo engine for equity-market models built from competing Brownian
//! particles, with regulatory splits at a market-weight threshold and random
//! mergers driven by exponential clocks.
//!
//! Layout:
//!
//! * [`params`], [`sde`]: coefficients and the ranked Euler–Maruyama step.
//! * [`events`]: split/merger state machine and the per-path simulator.
//! * [`portfolio`]: portfolio rules, wealth integration and event transfers.
//! * [`measure`]: pathwise Girsanov density and the martingale checks.
//! * [`bounds`]: closed-form hitting/tail bounds and their Monte Carlo estimators.
//! * [`harness`]: configuration, orchestration, reporting, acceptance checks.
//!
//! Paths are independent and each draws from its own ChaCha8 stream keyed by
//! `(seed, path index)`, so results do not depend on the worker count.

pub mod bounds;
pub mod config;
pub mod error;
pub mod events;
pub mod exec;
pub mod harness;
pub mod measure;
pub mod numeric;
pub mod oracle;
pub mod params;
pub mod path;
pub mod portfolio;
pub mod report;
pub mod sde;
pub mod stats;

pub use error::{Error, PathError, Result};
pub use events::{EventKind, EventRecord, MarketSim, MergerClock};
pub use params::{ModelParams, RankTable, SplitDistribution, ThetaMode};
pub use portfolio::PortfolioRule;
pub use sde::{MarketState, RankAssignment};
