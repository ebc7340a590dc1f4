//! Simulation library for continuum-armed bandits whose expected reward is a
//! Bounded Mean Oscillation (BMO) function — possibly discontinuous and
//! unbounded.
//!
//! The library provides:
//!
//! - [`dyadic`]: exact geometry of dyadic cubes of `[0,1)^d`;
//! - [`cube_stats`]: per-cube sample statistics and the optimistic index
//!   `U_t = m_t + H_t + J`;
//! - [`bandit_p`]: UCB over a strict dyadic partition refined by the rule
//!   `H_t(q) >= J(q)`;
//! - [`bandit_z`]: zooming over a cube collection with terminal / pre-parent
//!   / parent classification and episode play of `M_d` arms;
//! - [`envs`]: reward environments (including unbounded ones) with bounded
//!   noise and analytic helpers;
//! - [`oracle`]: the delta-regret oracle `f^delta` and empirical checkers
//!   for the inequalities the analysis relies on;
//! - [`harness`]: seeded, replicated experiment runs with CSV emission;
//! - [`trace`]: run traces and their textual serialization.

pub mod bandit_p;
pub mod bandit_z;
pub mod cube_stats;
pub mod dyadic;
pub mod envs;
pub mod harness;
pub mod oracle;
pub mod trace;

pub use cube_stats::{CubeNode, CubeTree, IndexParams};
pub use dyadic::{DyadicCube, Point};
pub use envs::EnvironmentSpec;
pub use oracle::{AdmissibilityReport, RegretLedger};
pub use trace::RunTrace;
