//! Synthetic stand-in for a V-PCC encoder.
//!
//! Each "encoding" evaluates ground-truth linear distortion and power-law rate
//! models at the steps of a QP pair, optionally perturbed by seeded noise that
//! depends only on `(seed, qp)`.

mod separability;

pub use separability::{coupling_for_interaction_share, validate_separability, SeparabilityReport};

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{RdOracle, RdSample};
use crate::metrics::Omega;
use crate::models::{DistortionModel, ModelError, ProbeRecord, QpPair, RateModel, PROBE_QPS};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid codec spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate separability grid: {0}")]
    DegenerateGrid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `D_g = α_g·Q_g + β_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDistortion {
    pub alpha: f64,
    pub beta: f64,
}

/// `D_c = α_gc·Q_g + α_cc·Q_c + β_c` (plus an optional `coupling·Q_g·Q_c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorDistortion {
    pub alpha_g: f64,
    pub alpha_c: f64,
    pub beta: f64,
}

/// Ground truth and noise settings of the synthetic codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCodecSpec {
    pub geometry: GeometryDistortion,
    pub color: ColorDistortion,
    pub rate: RateModel,
    /// Relative noise level; 0 gives exact model values.
    #[serde(default)]
    pub noise_rel: f64,
    /// Occupancy-map and auxiliary bitrate, reported but never budgeted.
    #[serde(default)]
    pub overhead_kbpmp: f64,
    /// Simulated wall time of one encode.
    #[serde(default = "default_encode_time")]
    pub encode_time_ms: f64,
    /// Cross term added to `D_c`; 0 keeps color distortion additive.
    #[serde(default)]
    pub coupling: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_encode_time() -> f64 {
    1000.0
}

/// Observables of one simulated encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub qp: QpPair,
    pub r_g: f64,
    pub r_c: f64,
    /// Occupancy/auxiliary bitrate, outside the geometry+color budget.
    pub r_aux: f64,
    pub d_g: f64,
    pub d_c: f64,
    pub encode_time_ms: f64,
}

impl EncodeResult {
    /// Geometry plus color rate, the quantity constrained by the budget.
    pub fn rate(&self) -> f64 {
        self.r_g + self.r_c
    }

    pub fn distortion(&self, omega: Omega) -> f64 {
        omega.mix(self.d_g, self.d_c)
    }

    pub fn to_probe_record(&self) -> ProbeRecord {
        ProbeRecord {
            qp_g: self.qp.g,
            qp_c: self.qp.c,
            r_g_kbpmp: self.r_g,
            r_c_kbpmp: self.r_c,
            d_g: self.d_g,
            d_c: self.d_c,
        }
    }
}

impl SyntheticCodecSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            ("geometry.alpha", self.geometry.alpha),
            ("color.alpha_g", self.color.alpha_g),
            ("color.alpha_c", self.color.alpha_c),
            ("noise_rel", self.noise_rel),
            ("overhead_kbpmp", self.overhead_kbpmp),
            ("encode_time_ms", self.encode_time_ms),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidSpec(format!("{name} = {v} must be non-negative")));
            }
        }
        for (name, v) in [
            ("geometry.beta", self.geometry.beta),
            ("color.beta", self.color.beta),
            ("coupling", self.coupling),
        ] {
            if !v.is_finite() {
                return Err(SimError::InvalidSpec(format!("{name} is not finite")));
            }
        }
        let r = self.rate;
        RateModel::new(r.gamma_g, r.theta_g, r.gamma_c, r.theta_c)?;
        Ok(())
    }

    /// Combined-distortion model implied by the ground truth at `omega`.
    pub fn distortion_model(&self, omega: Omega) -> DistortionModel {
        let w = omega.value();
        DistortionModel::new(
            omega.mix(self.geometry.alpha, self.color.alpha_g),
            (1.0 - w) * self.color.alpha_c,
            omega.mix(self.geometry.beta, self.color.beta),
            omega,
        )
    }

    /// Noise-free color distortion at the given steps.
    pub fn clean_color_distortion(&self, q_g: f64, q_c: f64) -> f64 {
        let c = &self.color;
        c.alpha_g * q_g + c.alpha_c * q_c + c.beta + self.coupling * q_g * q_c
    }

    fn noise_rng(&self, qp: QpPair) -> ChaCha8Rng {
        // splitmix64 finaliser over (seed, qp) so neighbouring pairs decorrelate
        let mut z = self.seed ^ ((qp.g as u64) << 32 | qp.c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
    }

    /// Simulates one encoding. Pure in `(self, qp)`.
    pub fn encode(&self, qp: QpPair) -> EncodeResult {
        let q = qp.steps();
        let mut rng = self.noise_rng(qp);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let (z_rg, z_rc, z_dg, z_dc) = (z(), z(), z(), z());
        let n = self.noise_rel;

        let r_g = self.rate.geometry_rate(q.g) * (n * z_rg).exp();
        let r_c = self.rate.color_rate(q.c) * (n * z_rc).exp();
        let d_g = (self.geometry.alpha * q.g + self.geometry.beta) * (1.0 + n * z_dg);
        let d_c = self.clean_color_distortion(q.g, q.c) * (1.0 + n * z_dc);
        EncodeResult {
            qp,
            r_g,
            r_c,
            r_aux: self.overhead_kbpmp,
            d_g: d_g.max(0.0),
            d_c: d_c.max(0.0),
            encode_time_ms: self.encode_time_ms,
        }
    }
}

/// The three pre-encoding QP pairs used to fit the models.
pub fn probe_schedule() -> [QpPair; 3] {
    PROBE_QPS.map(|(g, c)| QpPair { g, c })
}

/// A codec spec evaluated at a fixed ω, counting every encode.
pub struct SimOracle<'a> {
    pub spec: &'a SyntheticCodecSpec,
    pub omega: Omega,
    calls: AtomicUsize,
}

impl<'a> SimOracle<'a> {
    pub fn new(spec: &'a SyntheticCodecSpec, omega: Omega) -> Self {
        SimOracle {
            spec,
            omega,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl RdOracle for SimOracle<'_> {
    fn evaluate(&self, qp: QpPair) -> RdSample {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let e = self.spec.encode(qp);
        RdSample {
            rate: e.rate(),
            distortion: e.distortion(self.omega),
        }
    }

    fn is_pure(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_distortion_model, fit_rate_model, qp_to_step};

    pub(crate) fn spec() -> SyntheticCodecSpec {
        SyntheticCodecSpec {
            geometry: GeometryDistortion { alpha: 0.1, beta: 0.2 },
            color: ColorDistortion {
                alpha_g: 0.05,
                alpha_c: 0.6,
                beta: 4.0,
            },
            rate: RateModel::new(600.0, -1.1, 9000.0, -1.3).unwrap(),
            noise_rel: 0.0,
            overhead_kbpmp: 12.0,
            encode_time_ms: 1000.0,
            coupling: 0.0,
            seed: 42,
        }
    }

    #[test]
    fn noise_free_geometry_distortion() {
        let e = spec().encode(QpPair { g: 22, c: 30 });
        assert_eq!(e.d_g, 1.0);
        assert_eq!(e.r_aux, 12.0);
    }

    #[test]
    fn encode_is_deterministic() {
        let mut s = spec();
        s.noise_rel = 0.05;
        let qp = QpPair { g: 31, c: 27 };
        assert_eq!(s.encode(qp), s.encode(qp));
        assert_ne!(s.encode(qp), s.encode(QpPair { g: 31, c: 28 }));
        let mut other = s;
        other.seed = 43;
        assert_ne!(s.encode(qp), other.encode(qp));
    }

    #[test]
    fn schedule_is_fixed() {
        assert_eq!(
            probe_schedule(),
            [
                QpPair { g: 33, c: 25 },
                QpPair { g: 34, c: 35 },
                QpPair { g: 24, c: 33 }
            ]
        );
    }

    #[test]
    fn schedule_is_affinely_independent() {
        let s = probe_schedule().map(|qp| qp.steps());
        // det [[g1 c1 1] [g2 c2 1] [g3 c3 1]]
        let det = s[0].g * (s[1].c - s[2].c) - s[0].c * (s[1].g - s[2].g) + (s[1].g * s[2].c - s[2].g * s[1].c);
        assert!(det.abs() > 100.0, "det = {det}");
        assert!((qp_to_step(33) - 28.51).abs() < 0.01);
    }

    #[test]
    fn probe_round_trip_recovers_truth() {
        let s = spec();
        let w = Omega::new(0.5).unwrap();
        let probes: Vec<_> = probe_schedule()
            .iter()
            .map(|&qp| s.encode(qp).to_probe_record().probe(w).unwrap())
            .collect();
        let dm = fit_distortion_model(&probes[0], &probes[1], &probes[2], w)
            .unwrap()
            .model;
        let truth = s.distortion_model(w);
        for (x, y) in [(dm.a, truth.a), (dm.b, truth.b), (dm.c, truth.c)] {
            assert!(((x - y) / y).abs() < 1e-9, "{x} vs {y}");
        }
        let rm = fit_rate_model(&probes[0], &probes[1]).unwrap();
        assert!(((rm.gamma_g - 600.0) / 600.0).abs() < 1e-9);
        assert!(((rm.theta_c + 1.3) / 1.3).abs() < 1e-9);
    }

    #[test]
    fn oracle_counts_calls() {
        let s = spec();
        let o = SimOracle::new(&s, Omega::new(0.5).unwrap());
        let _ = o.evaluate(QpPair { g: 22, c: 22 });
        let _ = o.evaluate(QpPair { g: 23, c: 22 });
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn validation() {
        let mut s = spec();
        s.noise_rel = -1.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.rate.theta_g = 0.5;
        assert!(matches!(
            s.validate(),
            Err(SimError::Model(ModelError::NonMonotoneRate { .. }))
        ));
        assert!(spec().validate().is_ok());
    }
}
