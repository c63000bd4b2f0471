//! Shared instance generators for integration tests.
#![allow(dead_code)]

use pcalloc::metrics::Omega;
use pcalloc::models::{qp_to_step, QuantPair, RateModel, QP_MAX, QP_MIN};
use pcalloc::simcodec::{ColorDistortion, GeometryDistortion, SyntheticCodecSpec};
use rand::Rng;

/// A noise-free codec, a weight and a budget that the default solver start
/// can serve.
#[derive(Debug, Clone, Copy)]
pub struct Instance {
    pub spec: SyntheticCodecSpec,
    pub omega: Omega,
    pub target: f64,
}

/// Draws codecs resembling measured V-PCC behaviour: geometry rates of
/// 50-90 kbpmp and color rates of 170-2600 kbpmp at QP 22, power-law
/// exponents between -1.5 and -0.7, color distortion dominated by its own
/// step.
pub fn vpcc_regime<R: Rng>(rng: &mut R) -> Instance {
    let q0 = qp_to_step(QP_MIN);
    let theta_g = rng.random_range(-1.5..-0.7);
    let theta_c = rng.random_range(-1.5..-0.7);
    let r_g0: f64 = rng.random_range(50.0..90.0);
    let r_c0 = (rng.random_range(170f64.ln()..2600f64.ln())).exp();
    let rate = RateModel::new(r_g0 / q0.powf(theta_g), theta_g, r_c0 / q0.powf(theta_c), theta_c).unwrap();
    let spec = SyntheticCodecSpec {
        geometry: GeometryDistortion {
            alpha: rng.random_range(0.01..0.06),
            beta: rng.random_range(0.1..2.0),
        },
        color: ColorDistortion {
            alpha_g: rng.random_range(0.0..0.1),
            alpha_c: rng.random_range(0.2..0.8),
            beta: rng.random_range(1.0..20.0),
        },
        rate,
        noise_rel: 0.0,
        overhead_kbpmp: 0.0,
        encode_time_ms: 1000.0,
        coupling: 0.0,
        seed: rng.random(),
    };
    let omega = Omega::new(if rng.random_bool(0.5) { 0.25 } else { 0.5 }).unwrap();
    let lo = 1.1 * rate.total(QuantPair { g: 80.0, c: 80.0 });
    let hi = 0.9 * rate.total(QuantPair { g: q0, c: q0 });
    let target = rng.random_range(lo.ln()..hi.ln()).exp();
    Instance { spec, omega, target }
}

pub fn max_step() -> f64 {
    qp_to_step(QP_MAX)
}
