//! Goodness-of-fit testing with a growing number of cells.
//!
//! The crate evaluates Pearson's chi-square, the log-likelihood ratio and
//! general symmetric cell statistics `S = Σ h(η_m)` on equal-probability
//! groupings, computes the Poisson-moment quantities that govern their
//! relative efficiency (`ρ`, `σ²(h)`, Lyapunov ratios), predicts α-slopes
//! and efficiency values from closed-form large-deviation expansions, and
//! verifies the predictions empirically through exact enumeration and
//! rare-event Monte Carlo (multilevel splitting).
//!
//! Modules follow the pipeline: [`grouping`] turns samples into occupancy
//! counts, [`alternatives`] describes the contiguous alternative densities
//! and their rate classification, [`statistics`] evaluates the test
//! statistics, [`poisson_moments`] provides the moment calculus,
//! [`largedev`] the theoretical predictions, and [`montecarlo`] the
//! sampling and estimation engine.

pub mod alternatives;
pub mod error;
pub mod grouping;
pub mod largedev;
pub mod montecarlo;
pub mod numeric;
pub mod poisson_moments;
pub mod statistics;

pub use error::{Error, Result};
