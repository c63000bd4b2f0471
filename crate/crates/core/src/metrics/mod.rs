//! Point-to-point distortion, PSNR and model-fit statistics.

mod distortion;
mod fit;
mod kdtree;

pub use distortion::{
    color_error, combined_distortion, geometry_error, psnr, symmetric_distortion, symmetric_distortion_with,
    DistortionPair, Omega, Peaks,
};
pub use fit::{fit_quality, FitQuality};
pub use kdtree::NnIndex;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("weighting factor {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("peak value {0} must be positive and finite")]
    InvalidPeak(f64),
    #[error("sequences have lengths {actual} and {fitted}; need equal lengths >= 2")]
    LengthMismatch { actual: usize, fitted: usize },
    #[error("squared correlation is undefined for a constant sequence")]
    ConstantSequence,
    #[error("non-finite value in input sequence")]
    NonFinite,
}
