use serde::{Deserialize, Serialize};

use super::{round_to_grid, AllocationProblem, SolverError};
use crate::models::{QpPair, QuantPair};

/// Interior-point tolerances and schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial barrier parameter.
    pub mu0: f64,
    /// Factor applied to μ after each outer iteration.
    pub eta: f64,
    /// Outer loop stops once μ drops below this.
    pub epsilon: f64,
    pub start: QuantPair,
    /// Inner loop stops when the gradient norm falls below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu0: 0.1,
            eta: 1e-6,
            epsilon: 1e-10,
            start: QuantPair { g: 80.0, c: 80.0 },
            newton_tol: 1e-9,
            max_newton_iters: 100,
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidConfig(what.to_string()));
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad("mu0 must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return bad("newton_tol must be positive");
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters must be at least 1");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo must lie in (0, 0.5)");
        }
        QuantPair::new(self.start.g, self.start.c)?;
        Ok(())
    }
}

/// Continuous optimum with iteration counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousSolution {
    pub q: QuantPair,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
}

/// Solver output for one target bitrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Allocation {
    /// Interior-point optimum before rounding.
    pub continuous: QuantPair,
    pub continuous_rate: f64,
    pub continuous_distortion: f64,
    /// Rounded grid pair.
    pub qp: QpPair,
    /// Modelled rate of `qp`, kbpmp.
    pub predicted_rate: f64,
    /// Modelled distortion of `qp`.
    pub predicted_distortion: f64,
    /// Remaining budget overshoot of `qp` after repair, kbpmp (0 when feasible).
    pub rounding_violation: f64,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
}

/// Runs the barrier outer loop from `cfg.start` and returns the final
/// iterate.
pub fn solve_continuous(p: &AllocationProblem, cfg: &SolverConfig) -> Result<ContinuousSolution, SolverError> {
    cfg.validate()?;
    let start = cfg.start;
    if !p.strictly_feasible(start) {
        return Err(SolverError::InfeasibleStart {
            start,
            rate: p.rate.total(start),
            r_target: p.r_target,
        });
    }
    let mut q = start;
    let mut mu = cfg.mu0;
    let mut outer = 0;
    let mut newton_total = 0;
    while mu >= cfg.epsilon {
        let (next, iters) = newton(p, q, mu, cfg)?;
        q = next;
        newton_total += iters;
        outer += 1;
        mu *= cfg.eta;
    }
    Ok(ContinuousSolution {
        q,
        outer_iterations: outer,
        newton_iterations: newton_total,
    })
}

/// Damped Newton minimisation of the barrier objective at fixed μ.
fn newton(
    p: &AllocationProblem,
    mut q: QuantPair,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<(QuantPair, usize), SolverError> {
    for iter in 0..cfg.max_newton_iters {
        let e = p.barrier_objective(q, mu)?;
        let [g0, g1] = e.gradient;
        if g0.hypot(g1) <= cfg.newton_tol {
            return Ok((q, iter));
        }
        let [[h00, h01], [_, h11]] = e.hessian;
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0 && h00 > 0.0) {
            return Err(SolverError::NewtonNonConvergence { mu, iterations: iter });
        }
        let step = [-(h11 * g0 - h01 * g1) / det, -(h00 * g1 - h01 * g0) / det];
        // squared Newton decrement; predicted decrease is half of it
        let decrement = -(g0 * step[0] + g1 * step[1]);
        if decrement <= 4.0 * f64::EPSILON * e.value.abs().max(1.0) {
            return Ok((q, iter));
        }

        let at = |t: f64| QuantPair {
            g: q.g + t * step[0],
            c: q.c + t * step[1],
        };
        let mut t = 1.0;
        while !p.strictly_feasible(at(t)) {
            t *= cfg.backtrack;
            if t < f64::MIN_POSITIVE {
                return Err(SolverError::NewtonNonConvergence { mu, iterations: iter });
            }
        }
        loop {
            let trial = at(t);
            let v = p.barrier_objective(trial, mu)?.value;
            if v <= e.value - cfg.armijo * t * decrement {
                q = trial;
                break;
            }
            t *= cfg.backtrack;
            if t < 1e-12 {
                // Stalled at the resolution of the objective value.
                return Ok((q, iter));
            }
        }
    }
    Err(SolverError::NewtonNonConvergence {
        mu,
        iterations: cfg.max_newton_iters,
    })
}

/// Solves the allocation problem and rounds the optimum to the QP grid.
pub fn solve_interior_point(p: &AllocationProblem, cfg: &SolverConfig) -> Result<Allocation, SolverError> {
    let sol = solve_continuous(p, cfg)?;
    let rounded = round_to_grid(p, sol.q);
    let steps = rounded.qp.steps();
    Ok(Allocation {
        continuous: sol.q,
        continuous_rate: p.rate.total(sol.q),
        continuous_distortion: p.distortion.predict(sol.q),
        qp: rounded.qp,
        predicted_rate: p.rate.total(steps),
        predicted_distortion: p.distortion.predict(steps),
        rounding_violation: rounded.rounding_violation,
        outer_iterations: sol.outer_iterations,
        newton_iterations: sol.newton_iterations,
    })
}
