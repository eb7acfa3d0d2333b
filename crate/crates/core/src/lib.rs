//! Steady-state disagreement of noisy discrete-time consensus
//! `x(t+1) = P x(t) + w(t)`: hitting times, Kemeny constants, effective
//! resistances, Monte Carlo estimates and noisy formation control.

pub mod disagreement;
pub mod error;
pub mod formation;
pub mod graphs;
pub mod io;
pub mod markov;
pub mod simulate;
pub mod sweep;
pub mod tolerance;

pub use disagreement::{DisagreementReport, Method, NoiseCovariance};
pub use error::{Error, Result};
pub use formation::{FormationReport, FormationSpec};
pub use graphs::{build_graph, Graph, GraphFamily};
pub use markov::{ChainAnalysis, StochasticMatrix};
pub use simulate::{BurnIn, NoiseDistribution, SimConfig, SimTrace};
pub use tolerance::Tolerances;

/// Crate version, embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
