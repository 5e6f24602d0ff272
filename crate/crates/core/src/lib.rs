//! Bucket sparsifiers for stochastic knapsack, multiple knapsack and
//! generalized assignment problems.
//!
//! An instance is a [`GapInstance`]: `n` items, `m` knapsacks and a per-pair
//! value/weight table. Knapsack (KP01) and multiple knapsack (MKP) are the
//! same type carrying a [`ProblemKind`] tag. Items become active
//! independently with probability `p`; a sparsifier commits to a query set
//! `Q` before the active set is revealed, and the optimum over the active
//! queried items is compared against the full-information optimum.
//!
//! Module map:
//!
//! - [`instance`]: instances, assignments, item sets, JSON format.
//! - [`gen`]: Gaussian-copula instance generator and the parameter grid.
//! - [`solvers`]: knapsack DP, branch-and-bound, fractional greedy, dense simplex.
//! - [`stochastic`]: active-set sampling and sparsifier evaluation.
//! - [`sparsifier`]: the bucket sparsifiers and degree accounting.
//! - [`reconstruction`]: replay of the charging argument with invariant checks.
//! - [`bench`]: the three-run benchmark protocol, CSV output and aggregation.

pub mod bench;
pub mod error;
pub mod gen;
pub mod instance;
pub mod reconstruction;
pub mod rng;
pub mod solvers;
pub mod sparsifier;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
pub use instance::{Assignment, GapInstance, ItemSet, ProblemKind};
