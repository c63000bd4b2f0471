//! Model-based bit allocation between geometry and color for video-based
//! point-cloud compression.
//!
//! The crate is organised along the allocation pipeline:
//!
//! * [`cloud`] holds the point-cloud data model and PLY I/O.
//! * [`metrics`] computes symmetric point-to-point distortion, PSNR and
//!   model-fit statistics.
//! * [`models`] fits the linear distortion model and the power-law rate
//!   models from three probe encodings.
//! * [`allocator`] solves the rate-constrained allocation with a log-barrier
//!   interior-point method and rounds the result to the codec's QP grid.
//! * [`simcodec`] is a synthetic codec used to exercise the whole pipeline.
//! * [`eval`] and [`pipeline`] produce BE/QPE/CQ/PSNR/BD-PSNR reports.
//!
//! ```
//! use pcalloc::allocator::{solve_interior_point, AllocationProblem, SolverConfig};
//! use pcalloc::metrics::Omega;
//! use pcalloc::models::{DistortionModel, RateModel};
//!
//! let problem = AllocationProblem::new(
//!     DistortionModel::new(0.5, 0.25, 4.0, Omega::new(0.5).unwrap()),
//!     RateModel::new(6400.0, -1.0, 3200.0, -1.0).unwrap(),
//!     1000.0,
//! )
//! .unwrap();
//! let alloc = solve_interior_point(&problem, &SolverConfig::default()).unwrap();
//! assert!((alloc.continuous.g - 9.6).abs() < 1e-4);
//! assert!((alloc.continuous.c - 9.6).abs() < 1e-4);
//! ```

pub mod allocator;
pub mod cloud;
pub mod error;
pub mod eval;
mod linalg;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod simcodec;

pub use error::{Error, ErrorCategory};
