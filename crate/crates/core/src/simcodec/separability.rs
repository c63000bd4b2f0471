//! Checks that measured color distortion splits into a geometry-step term
//! plus a color-step term, `D_c ≈ f_g(Q_g) + f_c(Q_c)`.
//!
//! On a full QP grid the least-squares additive fit is the two-way
//! main-effects decomposition (row mean + column mean − grand mean); whatever
//! it leaves behind is cross-term energy.

use serde::Serialize;

use super::{SimError, SyntheticCodecSpec};
use crate::metrics::fit_quality;
use crate::models::{qp_to_step, QpPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparabilityReport {
    /// Residual sum of squares of the additive fit over the total sum of
    /// squares about the mean.
    pub residual_fraction: f64,
    /// Squared correlation between measured and additively fitted `D_c`.
    pub additive_scc: f64,
    pub rmse: f64,
    pub cells: usize,
}

fn check_axis(name: &str, qps: &[u32]) -> Result<(), SimError> {
    if qps.len() < 4 {
        return Err(SimError::DegenerateGrid(format!(
            "{name} axis needs at least 4 QPs, got {}",
            qps.len()
        )));
    }
    let mut sorted = qps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != qps.len() {
        return Err(SimError::DegenerateGrid(format!("{name} axis repeats a QP")));
    }
    Ok(())
}

/// Two-way additive fit of `values[i][j]`; returns the fitted table.
fn additive_fit(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = values.len();
    let cols = values[0].len();
    let row_mean: Vec<f64> = values.iter().map(|r| r.iter().sum::<f64>() / cols as f64).collect();
    let col_mean: Vec<f64> = (0..cols)
        .map(|j| values.iter().map(|r| r[j]).sum::<f64>() / rows as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / rows as f64;
    (0..rows)
        .map(|i| (0..cols).map(|j| row_mean[i] + col_mean[j] - grand).collect())
        .collect()
}

/// Encodes every pair of `qp_g × qp_c` and fits the additive model to the
/// measured color distortion.
pub fn validate_separability(
    spec: &SyntheticCodecSpec,
    qp_g: &[u32],
    qp_c: &[u32],
) -> Result<SeparabilityReport, SimError> {
    check_axis("geometry", qp_g)?;
    check_axis("color", qp_c)?;
    let measured: Vec<Vec<f64>> = qp_g
        .iter()
        .map(|&g| {
            qp_c.iter()
                .map(|&c| Ok(spec.encode(QpPair::new(g, c)?).d_c))
                .collect::<Result<Vec<_>, SimError>>()
        })
        .collect::<Result<_, _>>()?;
    let fitted = additive_fit(&measured);

    let flat_m: Vec<f64> = measured.iter().flatten().copied().collect();
    let flat_f: Vec<f64> = fitted.iter().flatten().copied().collect();
    let n = flat_m.len() as f64;
    let mean = flat_m.iter().sum::<f64>() / n;
    let ss_tot: f64 = flat_m.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(SimError::DegenerateGrid("measured color distortion is constant".into()));
    }
    let ss_res: f64 = flat_m.iter().zip(&flat_f).map(|(m, f)| (m - f).powi(2)).sum();
    let quality = fit_quality(&flat_m, &flat_f).map_err(|e| SimError::DegenerateGrid(e.to_string()))?;
    Ok(SeparabilityReport {
        residual_fraction: ss_res / ss_tot,
        additive_scc: quality.scc,
        rmse: quality.rmse,
        cells: flat_m.len(),
    })
}

/// Coupling coefficient `ε` such that the cross-term energy of
/// `ε·Q_g·Q_c` is `share` of the total variance of the noise-free `D_c` over
/// the grid.
pub fn coupling_for_interaction_share(
    spec: &SyntheticCodecSpec,
    qp_g: &[u32],
    qp_c: &[u32],
    share: f64,
) -> Result<f64, SimError> {
    check_axis("geometry", qp_g)?;
    check_axis("color", qp_c)?;
    if !(share > 0.0 && share < 1.0) {
        return Err(SimError::InvalidSpec(format!(
            "interaction share {share} outside (0, 1)"
        )));
    }
    let base_spec = SyntheticCodecSpec { coupling: 0.0, ..*spec };
    let mut base = Vec::new();
    let mut cross = Vec::new();
    for &g in qp_g {
        let (mut brow, mut urow) = (Vec::new(), Vec::new());
        for &c in qp_c {
            let (qg, qc) = (qp_to_step(g), qp_to_step(c));
            brow.push(base_spec.clean_color_distortion(qg, qc));
            urow.push(qg * qc);
        }
        base.push(brow);
        cross.push(urow);
    }
    let flat = |t: &[Vec<f64>]| t.iter().flatten().copied().collect::<Vec<f64>>();
    let (b, u) = (flat(&base), flat(&cross));
    let n = b.len() as f64;
    let (mb, mu) = (b.iter().sum::<f64>() / n, u.iter().sum::<f64>() / n);
    let var_b = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
    let var_u = u.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let cov = b.iter().zip(&u).map(|(x, y)| (x - mb) * (y - mu)).sum::<f64>() / n;
    let fitted_u = flat(&additive_fit(&cross));
    let var_int = u.iter().zip(&fitted_u).map(|(x, f)| (x - f).powi(2)).sum::<f64>() / n;

    // ε²·V_int = share·(V_b + 2ε·C + ε²·V_u)
    let qa = var_int - share * var_u;
    let qb = -2.0 * share * cov;
    let qc = -share * var_b;
    if qa <= 0.0 {
        return Err(SimError::DegenerateGrid(format!(
            "a product coupling cannot reach an interaction share of {share} on this grid"
        )));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    Ok((-qb + disc.sqrt()) / (2.0 * qa))
}
