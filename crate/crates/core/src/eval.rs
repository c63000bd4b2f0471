//! Comparison metrics between the model-based allocator (PBA) and exhaustive
//! search (ESA): bitrate error, QP error, complexity quotient, PSNR and
//! Bjøntegaard delta PSNR.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::metrics::{psnr, MetricError, Omega, Peaks};
use crate::models::QpPair;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("target bitrate must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("reference time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("curve needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve rates must be positive and finite")]
    NonPositiveRate,
    #[error("curve is not sorted by rate")]
    Unsorted,
    #[error("curves do not overlap in rate")]
    NoOverlap,
    #[error("curve fit is singular (repeated rates?)")]
    Degenerate,
    #[error("results tables differ: {0}")]
    Mismatch(String),
    #[error("results table: {0}")]
    Table(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Bitrate error in percent, `|actual − target| / target · 100`.
pub fn compute_be(actual: f64, target: f64) -> Result<f64, EvalError> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(EvalError::NonPositiveTarget(target));
    }
    Ok((actual - target).abs() / target * 100.0)
}

/// Sum of absolute QP differences between two allocations.
pub fn compute_qpe(pba: QpPair, esa: QpPair) -> u32 {
    pba.g.abs_diff(esa.g) + pba.c.abs_diff(esa.c)
}

/// Complexity quotient in percent, `t_pba / t_esa · 100`.
pub fn compute_cq(t_pba: f64, t_esa: f64) -> Result<f64, EvalError> {
    if !(t_esa > 0.0 && t_esa.is_finite()) {
        return Err(EvalError::NonPositiveTime(t_esa));
    }
    Ok(t_pba / t_esa * 100.0)
}

/// One point of a rate-PSNR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub psnr: f64,
}

/// Cubic in `x − center`, lowest order first.
#[derive(Debug, Clone, Copy)]
struct Cubic {
    center: f64,
    coef: [f64; 4],
}

impl Cubic {
    fn fit(curve: &[RdPoint]) -> Result<Self, EvalError> {
        let xs: Vec<f64> = curve.iter().map(|p| p.rate.log10()).collect();
        let center = xs.iter().sum::<f64>() / xs.len() as f64;
        let rows: Vec<[f64; 4]> = xs
            .iter()
            .map(|x| {
                let t = x - center;
                [1.0, t, t * t, t * t * t]
            })
            .collect();
        let ys: Vec<f64> = curve.iter().map(|p| p.psnr).collect();
        let coef = linalg::least_squares(&rows, &ys).ok_or(EvalError::Degenerate)?;
        Ok(Cubic { center, coef })
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let t = x - self.center;
            self.coef
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64)
                .sum::<f64>()
        };
        anti(hi) - anti(lo)
    }
}

fn check_curve(curve: &[RdPoint]) -> Result<(), EvalError> {
    if curve.len() < 4 {
        return Err(EvalError::TooFewPoints(curve.len()));
    }
    if curve
        .iter()
        .any(|p| !(p.rate > 0.0 && p.rate.is_finite()) || !p.psnr.is_finite())
    {
        return Err(EvalError::NonPositiveRate);
    }
    if curve.windows(2).any(|w| w[1].rate < w[0].rate) {
        return Err(EvalError::Unsorted);
    }
    Ok(())
}

/// Bjøntegaard delta PSNR of `curve_b` relative to `curve_a`: the mean PSNR
/// gap between cubic fits in log10(rate) over the shared rate interval.
pub fn bd_psnr(curve_a: &[RdPoint], curve_b: &[RdPoint]) -> Result<f64, EvalError> {
    check_curve(curve_a)?;
    check_curve(curve_b)?;
    let range = |c: &[RdPoint]| (c[0].rate.log10(), c[c.len() - 1].rate.log10());
    let (a_lo, a_hi) = range(curve_a);
    let (b_lo, b_hi) = range(curve_b);
    let lo = a_lo.max(b_lo);
    let hi = a_hi.min(b_hi);
    if hi <= lo {
        return Err(EvalError::NoOverlap);
    }
    let fa = Cubic::fit(curve_a)?;
    let fb = Cubic::fit(curve_b)?;
    Ok((fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}

/// One allocation outcome, as exchanged through the results CSV
/// (`target_kbpmp,qp_g,qp_c,rate_kbpmp,d_g,d_c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub target_kbpmp: f64,
    pub qp_g: u32,
    pub qp_c: u32,
    pub rate_kbpmp: f64,
    pub d_g: f64,
    pub d_c: f64,
}

impl ResultRow {
    pub fn qp(&self) -> QpPair {
        QpPair {
            g: self.qp_g,
            c: self.qp_c,
        }
    }
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(|e| EvalError::Table(e.to_string())))
        .collect()
}

pub fn write_results<W: Write>(writer: W, rows: &[ResultRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Table(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Table(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRow {
    pub target_kbpmp: f64,
    pub pba_qp: QpPair,
    pub esa_qp: QpPair,
    pub pba_rate: f64,
    pub esa_rate: f64,
    pub pba_be_pct: f64,
    pub esa_be_pct: f64,
    pub qpe: u32,
    pub pba_distortion: f64,
    pub esa_distortion: f64,
    pub pba_psnr_db: f64,
    pub esa_psnr_db: f64,
}

/// PBA-versus-ESA comparison at one weighting factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub omega: Omega,
    pub rows: Vec<EvalRow>,
    pub mean_pba_be_pct: f64,
    pub mean_esa_be_pct: f64,
    pub mean_qpe: f64,
    pub cq_pct: Option<f64>,
    /// PBA relative to ESA; absent with fewer than 4 targets or a
    /// degenerate curve.
    pub bd_psnr_db: Option<f64>,
}

/// Encoding times of the two methods, for the complexity quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub pba: f64,
    pub esa: f64,
}

pub fn evaluate(
    pba: &[ResultRow],
    esa: &[ResultRow],
    omega: Omega,
    peaks: Peaks,
    timings: Option<Timings>,
) -> Result<EvalReport, EvalError> {
    if pba.len() != esa.len() {
        return Err(EvalError::Mismatch(format!(
            "{} PBA rows vs {} ESA rows",
            pba.len(),
            esa.len()
        )));
    }
    if pba.is_empty() {
        return Err(EvalError::Mismatch("no rows".into()));
    }
    let mut rows = Vec::with_capacity(pba.len());
    for (p, e) in pba.iter().zip(esa) {
        if p.target_kbpmp != e.target_kbpmp {
            return Err(EvalError::Mismatch(format!(
                "targets {} and {} are paired",
                p.target_kbpmp, e.target_kbpmp
            )));
        }
        rows.push(EvalRow {
            target_kbpmp: p.target_kbpmp,
            pba_qp: p.qp(),
            esa_qp: e.qp(),
            pba_rate: p.rate_kbpmp,
            esa_rate: e.rate_kbpmp,
            pba_be_pct: compute_be(p.rate_kbpmp, p.target_kbpmp)?,
            esa_be_pct: compute_be(e.rate_kbpmp, e.target_kbpmp)?,
            qpe: compute_qpe(p.qp(), e.qp()),
            pba_distortion: omega.mix(p.d_g, p.d_c),
            esa_distortion: omega.mix(e.d_g, e.d_c),
            pba_psnr_db: psnr(p.d_g, p.d_c, omega, peaks)?,
            esa_psnr_db: psnr(e.d_g, e.d_c, omega, peaks)?,
        });
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let curve = |rate: fn(&EvalRow) -> f64, db: fn(&EvalRow) -> f64| {
        let mut c: Vec<RdPoint> = rows
            .iter()
            .map(|r| RdPoint {
                rate: rate(r),
                psnr: db(r),
            })
            .collect();
        c.sort_by(|x, y| x.rate.total_cmp(&y.rate));
        c
    };
    let bd = bd_psnr(
        &curve(|r| r.esa_rate, |r| r.esa_psnr_db),
        &curve(|r| r.pba_rate, |r| r.pba_psnr_db),
    )
    .ok();
    Ok(EvalReport {
        omega,
        mean_pba_be_pct: mean(&|r| r.pba_be_pct),
        mean_esa_be_pct: mean(&|r| r.esa_be_pct),
        mean_qpe: mean(&|r| r.qpe as f64),
        cq_pct: timings.map(|t| compute_cq(t.pba, t.esa)).transpose()?,
        bd_psnr_db: bd,
        rows,
    })
}
