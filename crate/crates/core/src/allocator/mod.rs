//! Rate-constrained allocation of quantization steps.
//!
//! The continuous problem `min a·Q_g + b·Q_c + c  s.t.  R_g(Q_g) + R_c(Q_c) <= R_T`
//! is solved with a log-barrier interior-point method whose inner problems
//! are minimised by damped Newton iterations. The continuous optimum is then
//! rounded to the codec's QP grid. [`exhaustive_search`] provides the
//! grid-search baseline.

mod problem;
mod rounding;
mod search;
mod solver;

pub use problem::{AllocationProblem, BarrierEval, QpGrid};
pub use rounding::{round_to_grid, Rounded};
pub use search::{exhaustive_search, ModelOracle, RdOracle, RdSample, SearchResult};
pub use solver::{solve_continuous, solve_interior_point, Allocation, ContinuousSolution, SolverConfig};

use thiserror::Error;

use crate::models::{ModelError, QuantPair};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("distortion model rejected: {0}")]
    InvalidModel(String),
    #[error("target bitrate must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("target {r_target} kbpmp is not above the rate {min_rate} kbpmp of the coarsest grid point")]
    InfeasibleBudget { r_target: f64, min_rate: f64 },
    #[error("start point ({}, {}) is infeasible: rate {rate} kbpmp >= target {r_target} kbpmp", start.g, start.c)]
    InfeasibleStart { start: QuantPair, rate: f64, r_target: f64 },
    #[error("barrier evaluated outside its domain at ({}, {})", q.g, q.c)]
    Domain { q: QuantPair },
    #[error("Newton's method did not converge within {iterations} iterations at mu = {mu}")]
    NewtonNonConvergence { mu: f64, iterations: usize },
    #[error("no grid pair meets the target {r_target} kbpmp (cheapest is {min_rate} kbpmp)")]
    NoFeasiblePair { r_target: f64, min_rate: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SolverError {
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            SolverError::InfeasibleBudget { .. }
                | SolverError::InfeasibleStart { .. }
                | SolverError::NoFeasiblePair { .. }
        )
    }
}
