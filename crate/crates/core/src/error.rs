use std::path::PathBuf;

use thiserror::Error;

use crate::allocator::SolverError;
use crate::cloud::{CloudError, PlyError};
use crate::eval::EvalError;
use crate::metrics::MetricError;
use crate::models::ModelError;
use crate::pipeline::ConfigError;
use crate::simcodec::SimError;

/// Coarse classification used for process exit codes and machine-readable
/// error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Validation,
    Infeasible,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 2,
            ErrorCategory::Infeasible => 3,
            ErrorCategory::Io => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Infeasible => "infeasible",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Ply(PlyError::Io(_)) => ErrorCategory::Io,
            Error::Config(ConfigError::Io { .. }) => ErrorCategory::Io,
            Error::Solver(e) if e.is_infeasible() => ErrorCategory::Infeasible,
            _ => ErrorCategory::Validation,
        }
    }
}
