use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::models::{qp_to_step, DistortionModel, ModelError, QpPair, QuantPair, RateModel, QP_MAX, QP_MIN};

/// A contiguous range of admissible QPs, shared by both components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpGrid {
    min: u32,
    max: u32,
}

impl Default for QpGrid {
    fn default() -> Self {
        QpGrid {
            min: QP_MIN,
            max: QP_MAX,
        }
    }
}

impl QpGrid {
    pub fn new(min: u32, max: u32) -> Result<Self, ModelError> {
        if min > max {
            return Err(ModelError::QpOutOfGrid { g: min, c: max });
        }
        QpPair::new(min, max)?;
        Ok(QpGrid { min, max })
    }

    pub fn qps(&self) -> RangeInclusive<u32> {
        self.min..=self.max
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_qp(&self) -> u32 {
        self.min
    }

    pub fn max_qp(&self) -> u32 {
        self.max
    }

    /// Steps in increasing order.
    pub fn steps(&self) -> Vec<f64> {
        self.qps().map(qp_to_step).collect()
    }

    pub fn min_step(&self) -> f64 {
        qp_to_step(self.min)
    }

    pub fn max_step(&self) -> f64 {
        qp_to_step(self.max)
    }

    /// Every pair, geometry-major.
    pub fn pairs(&self) -> impl Iterator<Item = QpPair> + '_ {
        self.qps().flat_map(move |g| self.qps().map(move |c| QpPair { g, c }))
    }
}

/// Value, gradient and Hessian of the barrier objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    /// `R_T − R(q)`.
    pub slack: f64,
}

/// Modelled allocation problem for one target bitrate.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub distortion: DistortionModel,
    pub rate: RateModel,
    /// Budget for geometry plus color, kbpmp.
    pub r_target: f64,
    pub grid: QpGrid,
}

impl AllocationProblem {
    pub fn new(distortion: DistortionModel, rate: RateModel, r_target: f64) -> Result<Self, SolverError> {
        Self::with_grid(distortion, rate, r_target, QpGrid::default())
    }

    pub fn with_grid(
        distortion: DistortionModel,
        rate: RateModel,
        r_target: f64,
        grid: QpGrid,
    ) -> Result<Self, SolverError> {
        let warnings = distortion.warnings();
        if !warnings.is_empty() {
            let text: Vec<String> = warnings.iter().map(|w| w.to_string()).collect();
            return Err(SolverError::InvalidModel(text.join("; ")));
        }
        if ![distortion.a, distortion.b, distortion.c].iter().all(|v| v.is_finite()) {
            return Err(SolverError::InvalidModel("non-finite coefficient".into()));
        }
        if !(r_target.is_finite() && r_target > 0.0) {
            return Err(SolverError::InvalidBudget(r_target));
        }
        let min_rate = rate.total(QuantPair {
            g: grid.max_step(),
            c: grid.max_step(),
        });
        if r_target <= min_rate {
            return Err(SolverError::InfeasibleBudget { r_target, min_rate });
        }
        Ok(AllocationProblem {
            distortion,
            rate,
            r_target,
            grid,
        })
    }

    pub fn slack(&self, q: QuantPair) -> f64 {
        self.r_target - self.rate.total(q)
    }

    /// True when `q` is in the open domain of the barrier.
    pub fn strictly_feasible(&self, q: QuantPair) -> bool {
        q.g > 0.0 && q.c > 0.0 && q.g.is_finite() && q.c.is_finite() && self.slack(q) > 0.0
    }

    /// `a·Q_g + b·Q_c + c − μ·ln(R_T − γ_g Q_g^θ_g − γ_c Q_c^θ_c)` with its
    /// closed-form gradient and Hessian.
    pub fn barrier_objective(&self, q: QuantPair, mu: f64) -> Result<BarrierEval, SolverError> {
        if !self.strictly_feasible(q) {
            return Err(SolverError::Domain { q });
        }
        let rm = &self.rate;
        let r_g = rm.geometry_rate(q.g);
        let r_c = rm.color_rate(q.c);
        let s = self.r_target - r_g - r_c;
        // first and second derivatives of each power law
        let dg = rm.theta_g * r_g / q.g;
        let dc = rm.theta_c * r_c / q.c;
        let ddg = rm.theta_g * (rm.theta_g - 1.0) * r_g / (q.g * q.g);
        let ddc = rm.theta_c * (rm.theta_c - 1.0) * r_c / (q.c * q.c);
        let dm = &self.distortion;
        let value = dm.predict(q) - mu * s.ln();
        let gradient = [dm.a + mu * dg / s, dm.b + mu * dc / s];
        let s2 = s * s;
        let cross = mu * dg * dc / s2;
        let hessian = [
            [mu * (dg * dg / s2 + ddg / s), cross],
            [cross, mu * (dc * dc / s2 + ddc / s)],
        ];
        Ok(BarrierEval {
            value,
            gradient,
            hessian,
            slack: s,
        })
    }
}
