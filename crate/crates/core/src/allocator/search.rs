use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use super::{AllocationProblem, QpGrid, SolverError};
use crate::models::QpPair;

/// One (rate, distortion) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdSample {
    pub rate: f64,
    pub distortion: f64,
}

/// Something that can be "encoded" at a QP pair.
pub trait RdOracle: Sync {
    fn evaluate(&self, qp: QpPair) -> RdSample;

    /// Pure oracles may be evaluated concurrently.
    fn is_pure(&self) -> bool {
        false
    }
}

impl<F> RdOracle for F
where
    F: Fn(QpPair) -> RdSample + Sync,
{
    fn evaluate(&self, qp: QpPair) -> RdSample {
        self(qp)
    }
}

/// The fitted models of a problem, used as an oracle.
pub struct ModelOracle<'a>(pub &'a AllocationProblem);

impl RdOracle for ModelOracle<'_> {
    fn evaluate(&self, qp: QpPair) -> RdSample {
        let q = qp.steps();
        RdSample {
            rate: self.0.rate.total(q),
            distortion: self.0.distortion.predict(q),
        }
    }

    fn is_pure(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchResult {
    pub qp: QpPair,
    pub rate: f64,
    pub distortion: f64,
    pub evaluations: usize,
}

/// Evaluates every grid pair and returns the feasible pair of least
/// distortion; ties go to lower rate, then lower geometry QP, then lower
/// color QP.
pub fn exhaustive_search(oracle: &dyn RdOracle, r_target: f64, grid: QpGrid) -> Result<SearchResult, SolverError> {
    let pairs: Vec<QpPair> = grid.pairs().collect();
    let samples: Vec<RdSample> = if oracle.is_pure() {
        pairs.par_iter().map(|&qp| oracle.evaluate(qp)).collect()
    } else {
        pairs.iter().map(|&qp| oracle.evaluate(qp)).collect()
    };
    let order = |x: &(QpPair, RdSample), y: &(QpPair, RdSample)| {
        x.1.distortion
            .total_cmp(&y.1.distortion)
            .then(x.1.rate.total_cmp(&y.1.rate))
            .then(x.0.g.cmp(&y.0.g))
            .then(x.0.c.cmp(&y.0.c))
    };
    let best = pairs
        .iter()
        .copied()
        .zip(samples.iter().copied())
        .filter(|(_, s)| s.rate <= r_target)
        .min_by(|x, y| order(x, y));
    match best {
        Some((qp, s)) => Ok(SearchResult {
            qp,
            rate: s.rate,
            distortion: s.distortion,
            evaluations: pairs.len(),
        }),
        None => Err(SolverError::NoFeasiblePair {
            r_target,
            min_rate: samples
                .iter()
                .map(|s| s.rate)
                .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
                .unwrap_or(f64::NAN),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn linear_oracle(qp: QpPair) -> RdSample {
        let q = qp.steps();
        RdSample {
            rate: 6400.0 / q.g + 3200.0 / q.c,
            distortion: 0.5 * q.g + 0.25 * q.c + 4.0,
        }
    }

    #[test]
    fn counts_every_pair_exactly_once() {
        let calls = AtomicUsize::new(0);
        let oracle = |qp: QpPair| {
            calls.fetch_add(1, AtomicOrdering::Relaxed);
            linear_oracle(qp)
        };
        let r = exhaustive_search(&oracle, 1000.0, QpGrid::default()).unwrap();
        assert_eq!(calls.load(AtomicOrdering::Relaxed), 441);
        assert_eq!(r.evaluations, 441);
        assert!(r.rate <= 1000.0);
    }

    #[test]
    fn worked_budget_optimum() {
        // (24,23) costs 991.3 kbpmp at distortion 11.285; (24,24) 11.56; (23,24) is over budget.
        let r = exhaustive_search(&linear_oracle, 1000.0, QpGrid::default()).unwrap();
        assert_eq!(r.qp, QpPair { g: 24, c: 23 });
    }

    #[test]
    fn infeasible_budget() {
        let e = exhaustive_search(&linear_oracle, 100.0, QpGrid::default()).unwrap_err();
        assert!(matches!(e, SolverError::NoFeasiblePair { .. }));
        assert!(e.is_infeasible());
    }

    #[test]
    fn ties_prefer_lower_rate_then_lower_qps() {
        // constant distortion: lowest rate wins (coarsest pair)
        let flat = |qp: QpPair| RdSample {
            rate: linear_oracle(qp).rate,
            distortion: 1.0,
        };
        let r = exhaustive_search(&flat, 1e9, QpGrid::default()).unwrap();
        assert_eq!(r.qp, QpPair { g: 42, c: 42 });
        // constant distortion and rate: lowest geometry QP, then color QP
        let r = exhaustive_search(
            &|_qp: QpPair| RdSample {
                rate: 1.0,
                distortion: 1.0,
            },
            2.0,
            QpGrid::default(),
        )
        .unwrap();
        assert_eq!(r.qp, QpPair { g: 22, c: 22 });
    }
}
