//! Linear distortion and power-law rate models in the quantization-step
//! domain, and their closed-form fits from probe encodings.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::metrics::{fit_quality, FitQuality, MetricError, Omega};

/// Finest QP of the search grid (step 8).
pub const QP_MIN: u32 = 22;
/// Coarsest QP of the search grid (step ≈ 80.6).
pub const QP_MAX: u32 = 42;

/// The three probe encodings used to fit the models, as (geometry, color)
/// QPs. The first two also determine the rate model.
pub const PROBE_QPS: [(u32, u32); 3] = [(33, 25), (34, 35), (24, 33)];

/// HEVC quantization step of a QP: `2^((qp − 4) / 6)`.
pub fn qp_to_step(qp: u32) -> f64 {
    ((qp as f64 - 4.0) / 6.0).exp2()
}

/// Converts a raw bit count to kilobits per million points.
pub fn kbpmp(bits: f64, points: usize) -> f64 {
    (bits / 1000.0) / (points as f64 / 1e6)
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("quantization step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("QP pair ({g}, {c}) outside the grid [{QP_MIN}, {QP_MAX}]")]
    QpOutOfGrid { g: u32, c: u32 },
    #[error("{what} must be positive and finite, got {value}")]
    NonPositiveRate { what: &'static str, value: f64 },
    #[error("distortion must be non-negative and finite, got {0}")]
    InvalidDistortion(f64),
    #[error("probes share the same {0} step; the rate model is undetermined")]
    DegenerateProbes(&'static str),
    #[error("{component} rate does not decrease with the step (exponent {theta})")]
    NonMonotoneRate { component: &'static str, theta: f64 },
    #[error("invalid rate model: {0}")]
    InvalidRateModel(String),
    #[error("probe steps are collinear; the distortion system is singular")]
    CollinearProbes,
    #[error("need at least {needed} probes, got {got}")]
    NotEnoughProbes { needed: usize, got: usize },
    #[error("probe log: {0}")]
    ProbeLog(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Geometry and color quantization steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantPair {
    pub g: f64,
    pub c: f64,
}

impl QuantPair {
    pub fn new(g: f64, c: f64) -> Result<Self, ModelError> {
        for v in [g, c] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidStep(v));
            }
        }
        Ok(QuantPair { g, c })
    }
}

/// Geometry and color QPs on the `[QP_MIN, QP_MAX]` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QpPair {
    pub g: u32,
    pub c: u32,
}

impl QpPair {
    pub fn new(g: u32, c: u32) -> Result<Self, ModelError> {
        let range = QP_MIN..=QP_MAX;
        if range.contains(&g) && range.contains(&c) {
            Ok(QpPair { g, c })
        } else {
            Err(ModelError::QpOutOfGrid { g, c })
        }
    }

    pub fn steps(self) -> QuantPair {
        QuantPair {
            g: qp_to_step(self.g),
            c: qp_to_step(self.c),
        }
    }
}

impl std::fmt::Display for QpPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.g, self.c)
    }
}

/// One pre-encoding measurement: rates in kbpmp and the combined distortion
/// at the fitting weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub qp: QpPair,
    pub r_g: f64,
    pub r_c: f64,
    pub d: f64,
}

impl ProbePoint {
    pub fn new(qp: QpPair, r_g: f64, r_c: f64, d: f64) -> Result<Self, ModelError> {
        check_rate("geometry rate", r_g)?;
        check_rate("color rate", r_c)?;
        if !(d.is_finite() && d >= 0.0) {
            return Err(ModelError::InvalidDistortion(d));
        }
        Ok(ProbePoint { qp, r_g, r_c, d })
    }
}

fn check_rate(what: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositiveRate { what, value })
    }
}

/// `D = a·Q_g + b·Q_c + c` at a fixed weighting factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub omega: Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ModelWarning {
    /// `a < 0`: modelled distortion decreases as the geometry step grows.
    NegativeGeometrySlope(f64),
    /// `b < 0`: modelled distortion decreases as the color step grows.
    NegativeColorSlope(f64),
}

impl std::fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelWarning::NegativeGeometrySlope(a) => write!(f, "negative geometry slope a = {a}"),
            ModelWarning::NegativeColorSlope(b) => write!(f, "negative color slope b = {b}"),
        }
    }
}

impl DistortionModel {
    pub fn new(a: f64, b: f64, c: f64, omega: Omega) -> Self {
        DistortionModel { a, b, c, omega }
    }

    pub fn predict(&self, q: QuantPair) -> f64 {
        self.a * q.g + self.b * q.c + self.c
    }

    pub fn warnings(&self) -> Vec<ModelWarning> {
        let mut w = Vec::new();
        if self.a < 0.0 {
            w.push(ModelWarning::NegativeGeometrySlope(self.a));
        }
        if self.b < 0.0 {
            w.push(ModelWarning::NegativeColorSlope(self.b));
        }
        w
    }

    /// Scales the objective by a positive constant.
    pub fn scaled(&self, k: f64) -> Self {
        DistortionModel {
            a: self.a * k,
            b: self.b * k,
            c: self.c * k,
            omega: self.omega,
        }
    }
}

/// `R_g = γ_g·Q_g^θ_g`, `R_c = γ_c·Q_c^θ_c`, in kbpmp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub gamma_g: f64,
    pub theta_g: f64,
    pub gamma_c: f64,
    pub theta_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub r_g: f64,
    pub r_c: f64,
    pub total: f64,
}

impl RateModel {
    pub fn new(gamma_g: f64, theta_g: f64, gamma_c: f64, theta_c: f64) -> Result<Self, ModelError> {
        for (name, g) in [("gamma_g", gamma_g), ("gamma_c", gamma_c)] {
            if !(g.is_finite() && g > 0.0) {
                return Err(ModelError::InvalidRateModel(format!("{name} = {g} must be positive")));
            }
        }
        for (component, theta) in [("geometry", theta_g), ("color", theta_c)] {
            if !theta.is_finite() {
                return Err(ModelError::InvalidRateModel(format!("{component} exponent is {theta}")));
            }
            if theta >= 0.0 {
                return Err(ModelError::NonMonotoneRate { component, theta });
            }
        }
        Ok(RateModel {
            gamma_g,
            theta_g,
            gamma_c,
            theta_c,
        })
    }

    #[inline]
    pub fn geometry_rate(&self, q_g: f64) -> f64 {
        self.gamma_g * q_g.powf(self.theta_g)
    }

    #[inline]
    pub fn color_rate(&self, q_c: f64) -> f64 {
        self.gamma_c * q_c.powf(self.theta_c)
    }

    pub fn predict(&self, q: QuantPair) -> RatePrediction {
        let r_g = self.geometry_rate(q.g);
        let r_c = self.color_rate(q.c);
        RatePrediction {
            r_g,
            r_c,
            total: r_g + r_c,
        }
    }

    pub fn total(&self, q: QuantPair) -> f64 {
        self.geometry_rate(q.g) + self.color_rate(q.c)
    }
}

fn fit_power_law(component: &'static str, q1: f64, r1: f64, q2: f64, r2: f64) -> Result<(f64, f64), ModelError> {
    if q1 == q2 {
        return Err(ModelError::DegenerateProbes(component));
    }
    let theta = (r1 / r2).ln() / (q1 / q2).ln();
    if theta >= 0.0 {
        return Err(ModelError::NonMonotoneRate { component, theta });
    }
    Ok((r1 / q1.powf(theta), theta))
}

/// Solves the two 2×2 log-linear systems for the rate model exactly.
pub fn fit_rate_model(p1: &ProbePoint, p2: &ProbePoint) -> Result<RateModel, ModelError> {
    for p in [p1, p2] {
        check_rate("geometry rate", p.r_g)?;
        check_rate("color rate", p.r_c)?;
    }
    let (s1, s2) = (p1.qp.steps(), p2.qp.steps());
    let (gamma_g, theta_g) = fit_power_law("geometry", s1.g, p1.r_g, s2.g, p2.r_g)?;
    let (gamma_c, theta_c) = fit_power_law("color", s1.c, p1.r_c, s2.c, p2.r_c)?;
    RateModel::new(gamma_g, theta_g, gamma_c, theta_c)
}

/// Fitted distortion model plus any sanity warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionFit {
    pub model: DistortionModel,
    pub warnings: Vec<ModelWarning>,
}

impl DistortionFit {
    fn new(model: DistortionModel) -> Self {
        DistortionFit {
            warnings: model.warnings(),
            model,
        }
    }
}

/// Solves the 3×3 system `D_i = a·Q_{g,i} + b·Q_{c,i} + c` exactly.
pub fn fit_distortion_model(
    p1: &ProbePoint,
    p2: &ProbePoint,
    p3: &ProbePoint,
    omega: Omega,
) -> Result<DistortionFit, ModelError> {
    let row = |p: &ProbePoint| {
        let q = p.qp.steps();
        [q.g, q.c, 1.0]
    };
    let [a, b, c] =
        linalg::solve([row(p1), row(p2), row(p3)], [p1.d, p2.d, p3.d]).ok_or(ModelError::CollinearProbes)?;
    Ok(DistortionFit::new(DistortionModel::new(a, b, c, omega)))
}

/// Least-squares distortion fit over any number (≥ 3) of probes.
pub fn fit_distortion_least_squares(probes: &[ProbePoint], omega: Omega) -> Result<DistortionFit, ModelError> {
    if probes.len() < 3 {
        return Err(ModelError::NotEnoughProbes {
            needed: 3,
            got: probes.len(),
        });
    }
    let rows: Vec<[f64; 3]> = probes
        .iter()
        .map(|p| {
            let q = p.qp.steps();
            [q.g, q.c, 1.0]
        })
        .collect();
    let d: Vec<f64> = probes.iter().map(|p| p.d).collect();
    let [a, b, c] = linalg::least_squares(&rows, &d).ok_or(ModelError::CollinearProbes)?;
    Ok(DistortionFit::new(DistortionModel::new(a, b, c, omega)))
}

/// Least-squares power-law fit in the log-log domain over ≥ 2 probes.
pub fn fit_rate_least_squares(probes: &[ProbePoint]) -> Result<RateModel, ModelError> {
    if probes.len() < 2 {
        return Err(ModelError::NotEnoughProbes {
            needed: 2,
            got: probes.len(),
        });
    }
    let fit = |component: &'static str, pick: &dyn Fn(&ProbePoint) -> (f64, f64)| {
        let mut rows = Vec::with_capacity(probes.len());
        let mut ys = Vec::with_capacity(probes.len());
        for p in probes {
            let (q, r) = pick(p);
            check_rate("rate", r)?;
            rows.push([1.0, q.ln()]);
            ys.push(r.ln());
        }
        let [ln_gamma, theta] = linalg::least_squares(&rows, &ys).ok_or(ModelError::DegenerateProbes(component))?;
        Ok::<_, ModelError>((ln_gamma.exp(), theta))
    };
    let (gamma_g, theta_g) = fit("geometry", &|p| (p.qp.steps().g, p.r_g))?;
    let (gamma_c, theta_c) = fit("color", &|p| (p.qp.steps().c, p.r_c))?;
    RateModel::new(gamma_g, theta_g, gamma_c, theta_c)
}

/// One row of the probe-log CSV
/// (`qp_g,qp_c,r_g_kbpmp,r_c_kbpmp,d_g,d_c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub qp_g: u32,
    pub qp_c: u32,
    pub r_g_kbpmp: f64,
    pub r_c_kbpmp: f64,
    pub d_g: f64,
    pub d_c: f64,
}

impl ProbeRecord {
    pub fn qp(&self) -> Result<QpPair, ModelError> {
        QpPair::new(self.qp_g, self.qp_c)
    }

    /// Combines `d_g` and `d_c` at `omega` into a probe point.
    pub fn probe(&self, omega: Omega) -> Result<ProbePoint, ModelError> {
        for d in [self.d_g, self.d_c] {
            if !(d.is_finite() && d >= 0.0) {
                return Err(ModelError::InvalidDistortion(d));
            }
        }
        ProbePoint::new(
            self.qp()?,
            self.r_g_kbpmp,
            self.r_c_kbpmp,
            omega.mix(self.d_g, self.d_c),
        )
    }
}

pub fn read_probe_log<R: Read>(reader: R) -> Result<Vec<ProbeRecord>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ModelError::ProbeLog(e.to_string()))?.clone();
    let expected = ["qp_g", "qp_c", "r_g_kbpmp", "r_c_kbpmp", "d_g", "d_c"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ModelError::ProbeLog(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| ModelError::ProbeLog(e.to_string())))
        .collect()
}

pub fn write_probe_log<W: Write>(writer: W, records: &[ProbeRecord]) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| ModelError::ProbeLog(e.to_string()))?;
    }
    w.flush().map_err(|e| ModelError::ProbeLog(e.to_string()))
}

/// Reads a probe log from disk; I/O failures are reported separately from
/// content errors.
pub fn load_probe_log(path: impl AsRef<Path>) -> Result<Vec<ProbeRecord>, crate::Error> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(read_probe_log(file)?)
}

/// Models fitted at one weighting factor, in the form written by `fit` and
/// read by `allocate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub omega: Omega,
    pub distortion: DistortionModel,
    pub rate: RateModel,
    #[serde(default)]
    pub warnings: Vec<ModelWarning>,
    /// The probes the models were fitted from.
    #[serde(default)]
    pub probes: Vec<QpPair>,
    /// Agreement with every row of the log, when it has more than the fitted
    /// probes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion_quality: Option<FitQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_quality: Option<FitQuality>,
}

/// How the probe rows of a log are turned into models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Exact solve on the three schedule probes (or the first three rows).
    #[default]
    Exact,
    /// Least squares over every row.
    LeastSquares,
}

/// Fits both models from a probe log at `omega`.
///
/// With [`FitMethod::Exact`] the rows matching [`PROBE_QPS`] are used when all
/// three are present, otherwise the first three rows in file order.
pub fn fit_from_records(records: &[ProbeRecord], omega: Omega, method: FitMethod) -> Result<FittedModels, ModelError> {
    let probes = records.iter().map(|r| r.probe(omega)).collect::<Result<Vec<_>, _>>()?;
    let (dist, rate, used) = match method {
        FitMethod::Exact => {
            let scheduled: Option<Vec<ProbePoint>> = PROBE_QPS
                .iter()
                .map(|&(g, c)| probes.iter().find(|p| p.qp.g == g && p.qp.c == c).copied())
                .collect();
            let chosen = match scheduled {
                Some(s) => s,
                None if probes.len() >= 3 => probes[..3].to_vec(),
                None => {
                    return Err(ModelError::NotEnoughProbes {
                        needed: 3,
                        got: probes.len(),
                    })
                }
            };
            let dist = fit_distortion_model(&chosen[0], &chosen[1], &chosen[2], omega)?;
            let rate = fit_rate_model(&chosen[0], &chosen[1])?;
            (dist, rate, chosen.iter().map(|p| p.qp).collect())
        }
        FitMethod::LeastSquares => (
            fit_distortion_least_squares(&probes, omega)?,
            fit_rate_least_squares(&probes)?,
            probes.iter().map(|p| p.qp).collect::<Vec<_>>(),
        ),
    };
    let (distortion_quality, rate_quality) = if probes.len() > 3 {
        let actual_d: Vec<f64> = probes.iter().map(|p| p.d).collect();
        let fitted_d: Vec<f64> = probes.iter().map(|p| dist.model.predict(p.qp.steps())).collect();
        let actual_r: Vec<f64> = probes.iter().map(|p| p.r_g + p.r_c).collect();
        let fitted_r: Vec<f64> = probes.iter().map(|p| rate.total(p.qp.steps())).collect();
        (
            fit_quality(&actual_d, &fitted_d).ok(),
            fit_quality(&actual_r, &fitted_r).ok(),
        )
    } else {
        (None, None)
    };
    Ok(FittedModels {
        omega,
        warnings: dist.warnings.clone(),
        distortion: dist.model,
        rate,
        probes: used,
        distortion_quality,
        rate_quality,
    })
}
