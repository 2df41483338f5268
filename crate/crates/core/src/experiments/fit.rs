use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::{Error, Result};

/// `distance ~ c eps^q` on the uncensored points of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub c: f64,
    pub q: f64,
    /// 3 sigma half-width of `q` from the per-point standard errors.
    pub q_halfwidth3s: f64,
    pub residual: f64,
    pub n_points: usize,
}

/// Weighted least squares of `ln d` on `ln eps`. Returns `(C, q, residual)`
/// with `residual` the weighted root-mean-square misfit in log space.
pub fn fit_rate(eps: &[f64], distances: &[f64], weights: &[f64]) -> Result<(f64, f64, f64)> {
    let (c, q, r, _) = wls(eps, distances, weights)?;
    Ok((c, q, r))
}

fn wls(eps: &[f64], d: &[f64], w: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if eps.len() != d.len() || eps.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: eps.len(),
            found: d.len().min(w.len()),
        });
    }
    if eps.len() < 2 {
        return Err(Error::invalid("a rate fit needs at least two points"));
    }
    if let Some(x) = d.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!(
            "non-positive distance {x} cannot be fitted; report it as censored"
        )));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid("eps values and weights must be positive"));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(a, b)| a * (b - xm) * (b - xm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid(
            "rate fit needs at least two distinct eps values",
        ));
    }
    let sxy: f64 = (0..x.len()).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let q = sxy / sxx;
    let b = ym - q * xm;
    let rss: f64 = (0..x.len())
        .map(|i| w[i] * (y[i] - b - q * x[i]).powi(2))
        .sum();
    Ok((b.exp(), q, (rss / sw).sqrt(), sxx))
}

/// Fit on the uncensored estimates, weighting each point by the inverse
/// variance of its logarithm (`(3 d / halfwidth)^2`). Deterministic values
/// (zero half-width) are weighted equally and carry no slope error.
pub fn fit_with_error(series: &[&Estimate]) -> Option<RateFit> {
    let kept: Vec<&&Estimate> = series.iter().filter(|e| !e.censored).collect();
    if kept.len() < 2 {
        return None;
    }
    let eps: Vec<f64> = kept.iter().map(|e| e.eps).collect();
    let d: Vec<f64> = kept.iter().map(|e| e.estimate).collect();
    let exact = kept.iter().all(|e| e.halfwidth3s == 0.0);
    let w: Vec<f64> = if exact {
        vec![1.0; kept.len()]
    } else {
        kept.iter()
            .map(|e| {
                let rel = (e.halfwidth3s / 3.0 / e.estimate).max(1e-15);
                1.0 / (rel * rel)
            })
            .collect()
    };
    let (c, q, residual, sxx) = wls(&eps, &d, &w).ok()?;
    Some(RateFit {
        c,
        q,
        q_halfwidth3s: if exact { 0.0 } else { 3.0 / sxx.sqrt() },
        residual,
        n_points: kept.len(),
    })
}
