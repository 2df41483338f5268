use serde::{Deserialize, Serialize};

use crate::numerics::{mean_and_stderr, pairwise_sum};
use crate::{Error, Result};

use super::measure::EmpiricalMeasure;
use super::metric::{ground_cost, GroundMetric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: f64,
    pub empirical: f64,
    pub bound: f64,
    /// 3 sigma binomial half-width evaluated at the bound.
    pub halfwidth3s: f64,
}

impl TailRow {
    pub fn within_bound(&self) -> bool {
        self.empirical <= self.bound + self.halfwidth3s
    }
}

/// Empirical `P(X > K)` next to `exp(-eta K)` for each `K`.
pub fn exp_moment_tail(samples: &[f64], eta: f64, ks: &[f64]) -> Result<Vec<TailRow>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if samples.is_empty() {
        return Err(Error::invalid("tail estimate needs samples"));
    }
    let n = samples.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = samples.iter().filter(|&&x| x > k).count() as f64;
            let bound = (-eta * k).exp().min(1.0);
            TailRow {
                k,
                empirical: hits / n,
                bound,
                halfwidth3s: 3.0 * (bound * (1.0 - bound) / n).sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellRow {
    pub shell: usize,
    /// Fraction of samples whose gate falls in this shell.
    pub mass: f64,
    /// `E[X^delta 1{gate in shell}]`.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellEstimate {
    pub estimate: f64,
    pub halfwidth3s: f64,
    pub shells: Vec<ShellRow>,
}

/// `E[X^delta]` assembled as a sum over shells `k w <= gate < (k+1) w`.
/// Negative gates are put in shell 0.
pub fn shell_partitioned_moment(
    pairs: &[(f64, f64)],
    delta: f64,
    shell_width: f64,
) -> Result<ShellEstimate> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if !(shell_width > 0.0) || !shell_width.is_finite() {
        return Err(Error::invalid("shell width must be positive"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("shell estimate needs samples"));
    }
    if pairs.iter().any(|(x, g)| !(*x >= 0.0) || !g.is_finite()) {
        return Err(Error::invalid(
            "values must be non-negative and gates finite",
        ));
    }
    let n = pairs.len() as f64;
    let powered: Vec<f64> = pairs.iter().map(|(x, _)| x.powf(delta)).collect();
    let shell_of = |g: f64| (g.max(0.0) / shell_width).floor() as usize;
    let top = pairs.iter().map(|&(_, g)| shell_of(g)).max().unwrap_or(0);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); top + 1];
    for (&(_, g), &p) in pairs.iter().zip(&powered) {
        buckets[shell_of(g)].push(p);
    }
    let shells: Vec<ShellRow> = buckets
        .iter()
        .enumerate()
        .map(|(k, b)| ShellRow {
            shell: k,
            mass: b.len() as f64 / n,
            contribution: pairwise_sum(b) / n,
        })
        .collect();
    let contributions: Vec<f64> = shells.iter().map(|s| s.contribution).collect();
    let (_, se) = mean_and_stderr(&powered);
    Ok(ShellEstimate {
        estimate: pairwise_sum(&contributions),
        halfwidth3s: if se.is_finite() { 3.0 * se } else { 0.0 },
        shells,
    })
}

pub trait Observable {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Observable for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Observables shipped with the library. Coordinates are taken relative to
/// `offset`, so a `(u, theta)` sample can be read through its `theta` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShippedObservable {
    SquaredNorm {
        offset: usize,
    },
    /// `min(exp(eta |x|^2), cap)`.
    CappedExp {
        offset: usize,
        eta: f64,
        cap: f64,
    },
    Coordinate {
        index: usize,
    },
}

impl Observable for ShippedObservable {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ShippedObservable::SquaredNorm { offset } => x[offset..].iter().map(|v| v * v).sum(),
            ShippedObservable::CappedExp { offset, eta, cap } => {
                let s: f64 = x[offset..].iter().map(|v| v * v).sum();
                (eta * s).exp().min(cap)
            }
            ShippedObservable::Coordinate { index } => x[index],
        }
    }
}

fn weighted_mean(mu: &EmpiricalMeasure, phi: &dyn Observable) -> f64 {
    let terms: Vec<f64> = mu
        .samples()
        .zip(mu.weights())
        .map(|(x, w)| w * phi.eval(x))
        .collect();
    pairwise_sum(&terms)
}

/// `|int phi dmu - int phi dnu|`.
pub fn observable_gap(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    phi: &dyn Observable,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    Ok((weighted_mean(mu, phi) - weighted_mean(nu, phi)).abs())
}

/// `max |phi(x) - phi(y)| / rho(x, y)` over `x` in `mu`, `y` in `nu`. With this
/// constant the gap of any coupling of the two clouds is bounded by `L` times
/// its transport cost.
pub fn empirical_lipschitz(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    phi: &dyn Observable,
    gm: &GroundMetric,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let fy: Vec<f64> = nu.samples().map(|y| phi.eval(y)).collect();
    let mut best: f64 = 0.0;
    for x in mu.samples() {
        let fx = phi.eval(x);
        for (y, &f) in nu.samples().zip(&fy) {
            let d = ground_cost(x, y, gm);
            let df = (fx - f).abs();
            if d > 0.0 {
                best = best.max(df / d);
            } else if df > 0.0 {
                return Ok(f64::INFINITY);
            }
        }
    }
    Ok(best)
}
