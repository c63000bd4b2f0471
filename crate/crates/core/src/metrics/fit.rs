use serde::{Deserialize, Serialize};

use super::MetricError;

/// Agreement between measured values and a model's predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    /// Squared Pearson correlation.
    pub scc: f64,
    pub rmse: f64,
    /// `rmse / max(actual)`; absent when the maximum is not positive.
    pub nrmse: Option<f64>,
}

pub fn fit_quality(actual: &[f64], fitted: &[f64]) -> Result<FitQuality, MetricError> {
    if actual.len() != fitted.len() || actual.len() < 2 {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            fitted: fitted.len(),
        });
    }
    if actual.iter().chain(fitted).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n = actual.len() as f64;
    let mean_a = actual.iter().sum::<f64>() / n;
    let mean_f = fitted.iter().sum::<f64>() / n;
    let (mut saa, mut sff, mut saf, mut sse) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &f) in actual.iter().zip(fitted) {
        let (da, df) = (a - mean_a, f - mean_f);
        saa += da * da;
        sff += df * df;
        saf += da * df;
        sse += (a - f) * (a - f);
    }
    if saa == 0.0 {
        return Err(MetricError::ConstantSequence);
    }
    let scc = if sff == 0.0 {
        0.0
    } else {
        ((saf * saf) / (saa * sff)).clamp(0.0, 1.0)
    };
    let rmse = (sse / n).sqrt();
    let max = actual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitQuality {
        scc,
        rmse,
        nrmse: (max > 0.0).then(|| rmse / max),
    })
}
