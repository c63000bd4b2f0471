//! Voxelized point clouds with per-point RGB color.

mod ply;

pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyError, PlyFormat};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported voxel-grid depth. Squared distances between two points
/// of a 31-bit grid still fit in a `u64`.
pub const MAX_BIT_DEPTH: u8 = 31;

/// Integer voxel coordinates.
pub type Position = [u32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Rgb { r: v, g: v, b: v }
    }
}

/// RGB to luminance conversion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LumaMatrix {
    /// ITU-R BT.709: `0.2126 R + 0.7152 G + 0.0722 B`.
    #[default]
    Bt709,
    /// ITU-R BT.601: `0.299 R + 0.587 G + 0.114 B`.
    Bt601,
}

/// Fixed-point scale of [`LumaMatrix::luma_fixed`]: luminance is carried in
/// units of 1e-4 so that both matrices are exact in integers.
pub const LUMA_SCALE: u32 = 10_000;

impl LumaMatrix {
    /// Channel weights scaled by [`LUMA_SCALE`]; each row sums to `LUMA_SCALE`.
    pub const fn weights(self) -> [u32; 3] {
        match self {
            LumaMatrix::Bt709 => [2126, 7152, 722],
            LumaMatrix::Bt601 => [2990, 5870, 1140],
        }
    }

    /// Luminance in units of `1 / LUMA_SCALE`, exact.
    #[inline]
    pub fn luma_fixed(self, c: Rgb) -> u32 {
        let [wr, wg, wb] = self.weights();
        wr * c.r as u32 + wg * c.g as u32 + wb * c.b as u32
    }

    pub fn luminance(self, c: Rgb) -> Luma {
        Luma(self.luma_fixed(c) as f64 / LUMA_SCALE as f64)
    }
}

impl std::str::FromStr for LumaMatrix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bt709" | "709" => Ok(LumaMatrix::Bt709),
            "bt601" | "601" => Ok(LumaMatrix::Bt601),
            other => Err(format!("unknown luma matrix `{other}` (expected bt709 or bt601)")),
        }
    }
}

/// Luminance on the 8-bit scale, `0 <= y <= 255`. Not rounded.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Luma(f64);

impl Luma {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// BT.709 luminance of an 8-bit RGB triple.
pub fn luminance(color: Rgb) -> Luma {
    LumaMatrix::Bt709.luminance(color)
}

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("point cloud is empty")]
    Empty,
    #[error("{positions} positions but {colors} colors")]
    LengthMismatch { positions: usize, colors: usize },
    #[error("bit depth {0} outside 1..={MAX_BIT_DEPTH}")]
    InvalidBitDepth(u8),
    #[error("point {index}: coordinate {value} on axis {axis} is outside [0, 2^{bit_depth})")]
    CoordinateOutOfRange {
        index: usize,
        axis: usize,
        value: u64,
        bit_depth: u8,
    },
}

/// A voxelized point cloud. Immutable once built; duplicate positions are
/// allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointCloud {
    positions: Vec<Position>,
    colors: Vec<Rgb>,
    bit_depth: u8,
}

impl PointCloud {
    /// Builds a cloud, inferring the smallest containing bit depth when
    /// `bit_depth` is `None`.
    pub fn new(positions: Vec<Position>, colors: Vec<Rgb>, bit_depth: Option<u8>) -> Result<Self, CloudError> {
        if positions.len() != colors.len() {
            return Err(CloudError::LengthMismatch {
                positions: positions.len(),
                colors: colors.len(),
            });
        }
        if positions.is_empty() {
            return Err(CloudError::Empty);
        }
        let bit_depth = match bit_depth {
            Some(d) => {
                if d == 0 || d > MAX_BIT_DEPTH {
                    return Err(CloudError::InvalidBitDepth(d));
                }
                let limit = 1u64 << d;
                for (index, p) in positions.iter().enumerate() {
                    if let Some(axis) = p.iter().position(|&v| v as u64 >= limit) {
                        return Err(CloudError::CoordinateOutOfRange {
                            index,
                            axis,
                            value: p[axis] as u64,
                            bit_depth: d,
                        });
                    }
                }
                d
            }
            None => {
                let max = positions.iter().flatten().copied().max().unwrap_or(0);
                min_bit_depth(max as u64)
            }
        };
        Ok(PointCloud {
            positions,
            colors,
            bit_depth,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// Geometry peak used for PSNR normalisation, `2^bit_depth - 1`.
    pub fn geometry_peak(&self) -> f64 {
        ((1u64 << self.bit_depth) - 1) as f64
    }
}

/// Smallest depth `d >= 1` with `max_coord < 2^d`.
pub(crate) fn min_bit_depth(max_coord: u64) -> u8 {
    let bits = 64 - max_coord.leading_zeros() as u8;
    bits.max(1)
}
