use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricError, NnIndex};
use crate::cloud::{LumaMatrix, PointCloud, LUMA_SCALE};

/// Geometry/color weighting factor ω in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Omega(f64);

impl Omega {
    pub fn new(w: f64) -> Result<Self, MetricError> {
        if (0.0..=1.0).contains(&w) {
            Ok(Omega(w))
        } else {
            Err(MetricError::InvalidWeight(w))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ω·geometry + (1 − ω)·color`.
    #[inline]
    pub fn mix(self, geometry: f64, color: f64) -> f64 {
        self.0 * geometry + (1.0 - self.0) * color
    }
}

impl TryFrom<f64> for Omega {
    type Error = MetricError;

    fn try_from(w: f64) -> Result<Self, Self::Error> {
        Omega::new(w)
    }
}

impl From<Omega> for f64 {
    fn from(w: Omega) -> f64 {
        w.0
    }
}

/// Symmetric geometry and luma MSE between two clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionPair {
    /// Geometry MSE in squared voxel units.
    pub d_g: f64,
    /// Luma MSE in squared 8-bit units.
    pub d_c: f64,
}

/// Exact integer sums for one direction `B -> A`.
#[derive(Debug, Clone, Copy, Default)]
struct DirectedSums {
    geometry: u128,
    // squared luma differences in units of LUMA_SCALE^-2
    color: u128,
}

impl DirectedSums {
    fn geometry_mse(self, n: usize) -> f64 {
        self.geometry as f64 / n as f64
    }

    fn color_mse(self, n: usize) -> f64 {
        let scale = (LUMA_SCALE as f64) * (LUMA_SCALE as f64);
        self.color as f64 / (n as f64 * scale)
    }
}

fn directed_sums(b: &PointCloud, a: &PointCloud, a_index: &NnIndex, matrix: LumaMatrix) -> DirectedSums {
    let a_colors = a.colors();
    b.positions()
        .par_iter()
        .zip(b.colors().par_iter())
        .map(|(p, c)| {
            let (nn, d2) = a_index.nearest(*p);
            let dy = matrix.luma_fixed(*c) as i64 - matrix.luma_fixed(a_colors[nn]) as i64;
            DirectedSums {
                geometry: d2 as u128,
                color: (dy * dy) as u128,
            }
        })
        .reduce(DirectedSums::default, |x, y| DirectedSums {
            geometry: x.geometry + y.geometry,
            color: x.color + y.color,
        })
}

/// Directed point-to-point geometry MSE: mean squared distance from each
/// point of `b` to its nearest neighbour in `a`.
pub fn geometry_error(b: &PointCloud, a: &PointCloud) -> f64 {
    let index = NnIndex::build(a);
    directed_sums(b, a, &index, LumaMatrix::default()).geometry_mse(b.len())
}

/// Directed luma MSE from `b` to `a` using the geometric nearest neighbours.
pub fn color_error(b: &PointCloud, a: &PointCloud, matrix: LumaMatrix) -> f64 {
    let index = NnIndex::build(a);
    directed_sums(b, a, &index, matrix).color_mse(b.len())
}

/// Symmetric point-to-point distortion with BT.709 luma.
pub fn symmetric_distortion(a: &PointCloud, b: &PointCloud) -> DistortionPair {
    symmetric_distortion_with(a, b, LumaMatrix::default())
}

/// Symmetric point-to-point distortion: each component is the larger of the
/// two directed errors.
pub fn symmetric_distortion_with(a: &PointCloud, b: &PointCloud, matrix: LumaMatrix) -> DistortionPair {
    let (a_index, b_index) = rayon::join(|| NnIndex::build(a), || NnIndex::build(b));
    let ba = directed_sums(b, a, &a_index, matrix);
    let ab = directed_sums(a, b, &b_index, matrix);
    DistortionPair {
        d_g: ba.geometry_mse(b.len()).max(ab.geometry_mse(a.len())),
        d_c: ba.color_mse(b.len()).max(ab.color_mse(a.len())),
    }
}

pub fn combined_distortion(pair: DistortionPair, omega: Omega) -> f64 {
    omega.mix(pair.d_g, pair.d_c)
}

/// Peak values used to normalise geometry and color MSE to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peaks {
    pub geometry: f64,
    pub color: f64,
}

impl Peaks {
    pub fn new(geometry: f64, color: f64) -> Result<Self, MetricError> {
        for p in [geometry, color] {
            if !(p.is_finite() && p > 0.0) {
                return Err(MetricError::InvalidPeak(p));
            }
        }
        Ok(Peaks { geometry, color })
    }

    /// `2^bit_depth − 1` for geometry, 255 for 8-bit color.
    pub fn for_bit_depth(bit_depth: u8) -> Self {
        Peaks {
            geometry: ((1u64 << bit_depth.clamp(1, 63)) - 1) as f64,
            color: 255.0,
        }
    }
}

/// Weighted-NMSE PSNR in dB. Returns `f64::INFINITY` when both
/// distortions are zero.
pub fn psnr(d_g: f64, d_c: f64, omega: Omega, peaks: Peaks) -> Result<f64, MetricError> {
    let peaks = Peaks::new(peaks.geometry, peaks.color)?;
    let nmse = omega.mix(
        d_g / (peaks.geometry * peaks.geometry),
        d_c / (peaks.color * peaks.color),
    );
    if nmse <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / nmse).log10())
}
