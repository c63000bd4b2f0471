use serde::Serialize;

use super::AllocationProblem;
use crate::models::{QpPair, QuantPair};

/// Grid pair chosen for a continuous optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rounded {
    pub qp: QpPair,
    /// Modelled rate above the target once no component can be coarsened
    /// further; 0 when the pair is feasible.
    pub rounding_violation: f64,
}

/// Index of the grid step nearest to `q`, ties toward the larger step.
fn nearest_index(steps: &[f64], q: f64) -> usize {
    let mut best = 0;
    for (i, s) in steps.iter().enumerate() {
        if (s - q).abs() <= (steps[best] - q).abs() {
            best = i;
        }
    }
    best
}

/// Rounds each component of `continuous` to the nearest grid step, then, if
/// the pair overshoots the budget, coarsens one QP at a time until it fits.
///
/// Each repair step coarsens the component whose modelled distortion slope
/// per unit of rate saved is smaller at the current pair (geometry on ties).
pub fn round_to_grid(p: &AllocationProblem, continuous: QuantPair) -> Rounded {
    let steps = p.grid.steps();
    let last = steps.len() - 1;
    let clamp = |v: f64| v.clamp(steps[0], steps[last]);
    let mut ig = nearest_index(&steps, clamp(continuous.g));
    let mut ic = nearest_index(&steps, clamp(continuous.c));

    let rm = &p.rate;
    let rate = |ig: usize, ic: usize| rm.geometry_rate(steps[ig]) + rm.color_rate(steps[ic]);
    while rate(ig, ic) > p.r_target {
        let can_g = ig < last;
        let can_c = ic < last;
        if !can_g && !can_c {
            break;
        }
        let coarsen_g = if can_g && can_c {
            // |dR/dQ| of a power law is |θ|·R/Q
            let slope_g = p.distortion.a * steps[ig] / (rm.theta_g.abs() * rm.geometry_rate(steps[ig]));
            let slope_c = p.distortion.b * steps[ic] / (rm.theta_c.abs() * rm.color_rate(steps[ic]));
            slope_g <= slope_c
        } else {
            can_g
        };
        if coarsen_g {
            ig += 1;
        } else {
            ic += 1;
        }
    }
    let base = p.grid.min_qp();
    Rounded {
        qp: QpPair {
            g: base + ig as u32,
            c: base + ic as u32,
        },
        rounding_violation: (rate(ig, ic) - p.r_target).max(0.0),
    }
}
