use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::numerics::dist;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// `int_0^1 exp(eta |(1-s)x + s y|^2) ds |x - y|`: the weighted length of
    /// the straight chord, an upper bound on the path infimum.
    ChordUpper,
    /// `|x - y|`, a lower bound.
    L2Lower,
    /// Lower bound, chord value and the coarse `exp(2 eta (|x|^2+|y|^2)) |x-y|` bound.
    Bracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    pub eta: f64,
    pub mode: MetricMode,
}

impl GroundMetric {
    pub fn new(eta: f64, mode: MetricMode) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!(
                "eta must be a finite non-negative number, got {eta}"
            )));
        }
        Ok(Self { eta, mode })
    }

    pub fn chord(eta: f64) -> Self {
        Self {
            eta,
            mode: MetricMode::ChordUpper,
        }
    }

    pub fn l2() -> Self {
        Self {
            eta: 0.0,
            mode: MetricMode::L2Lower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoValue {
    Value(f64),
    Bracket { lower: f64, chord: f64, coarse: f64 },
}

impl RhoValue {
    /// Scalar used as a transport cost; the chord value in bracket mode.
    pub fn value(&self) -> f64 {
        match *self {
            RhoValue::Value(v) => v,
            RhoValue::Bracket { chord, .. } => chord,
        }
    }
}

/// 16-point Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre_16() -> &'static [(f64, f64); 16] {
    static RULE: OnceLock<[(f64, f64); 16]> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 16;
        let mut rule = [(0.0, 0.0); N];
        for (i, slot) in rule.iter_mut().enumerate() {
            // Newton iteration on P_N from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            *slot = (0.5 * (1.0 - x), 0.5 * w);
        }
        rule
    })
}

fn chord_weight_integral(x: &[f64], y: &[f64], eta: f64) -> f64 {
    if eta == 0.0 {
        return 1.0;
    }
    // Fixed orientation so the cost is exactly symmetric in floating point.
    let (x, y) = match x
        .iter()
        .zip(y)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
    {
        Some(std::cmp::Ordering::Greater) => (y, x),
        _ => (x, y),
    };
    gauss_legendre_16()
        .iter()
        .map(|&(s, w)| {
            let sq: f64 = x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let p = (1.0 - s) * a + s * b;
                    p * p
                })
                .sum();
            w * (eta * sq).exp()
        })
        .sum()
}

pub fn rho_eta_point(x: &[f64], y: &[f64], gm: &GroundMetric) -> Result<RhoValue> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(match gm.mode {
        MetricMode::L2Lower => RhoValue::Value(dist(x, y)),
        MetricMode::ChordUpper => RhoValue::Value(ground_cost(x, y, gm)),
        MetricMode::Bracket => {
            let d = dist(x, y);
            let chord = if d == 0.0 {
                0.0
            } else {
                chord_weight_integral(x, y, gm.eta) * d
            };
            let sq: f64 = x.iter().chain(y).map(|v| v * v).sum();
            RhoValue::Bracket {
                lower: d,
                chord,
                coarse: (2.0 * gm.eta * sq).exp() * d,
            }
        }
    })
}

/// Transport cost between two points (no dimension check; hot path).
pub fn ground_cost(x: &[f64], y: &[f64], gm: &GroundMetric) -> f64 {
    let d = dist(x, y);
    match gm.mode {
        MetricMode::L2Lower => d,
        _ if d == 0.0 => 0.0,
        _ => chord_weight_integral(x, y, gm.eta) * d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_stream;

    #[test]
    fn quadrature_integrates_polynomials() {
        let rule = gauss_legendre_16();
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
        // exact for degree 31
        let m: f64 = rule.iter().map(|(s, w)| w * s.powi(31)).sum();
        assert!((m - 1.0 / 32.0).abs() < 1e-14);
    }

    #[test]
    fn chord_matches_closed_form_in_one_dimension() {
        // x = 0, y = a: int_0^1 exp(eta a^2 s^2) ds * a
        let (a, eta): (f64, f64) = (0.8, 0.5);
        let got = ground_cost(&[0.0], &[a], &GroundMetric::chord(eta));
        // Simpson with many panels as an independent reference
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |s: f64| (eta * a * a * s * s).exp();
        let mut simpson = f(0.0) + f(1.0);
        for k in 1..n {
            simpson += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        let want = simpson * h / 3.0 * a;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn eta_zero_collapses_to_euclidean() {
        let (x, y) = ([1.0, 2.0], [-0.5, 0.25]);
        let d = dist(&x, &y);
        for mode in [MetricMode::ChordUpper, MetricMode::L2Lower] {
            let v = rho_eta_point(&x, &y, &GroundMetric { eta: 0.0, mode }).unwrap();
            assert_eq!(v.value(), d);
        }
        match rho_eta_point(
            &x,
            &y,
            &GroundMetric {
                eta: 0.0,
                mode: MetricMode::Bracket,
            },
        )
        .unwrap()
        {
            RhoValue::Bracket {
                lower,
                chord,
                coarse,
            } => {
                assert_eq!(lower, d);
                assert_eq!(chord, d);
                assert_eq!(coarse, d);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn identical_points_are_at_distance_zero() {
        let x = [0.3, -1.0, 2.0];
        let gm = GroundMetric {
            eta: 0.7,
            mode: MetricMode::Bracket,
        };
        assert_eq!(rho_eta_point(&x, &x, &gm).unwrap().value(), 0.0);
    }

    #[test]
    fn bracket_ordering() {
        let z = make_stream(21, 0).normals(1000 * 6);
        let gm = GroundMetric {
            eta: 0.3,
            mode: MetricMode::Bracket,
        };
        for c in z.chunks_exact(6) {
            let RhoValue::Bracket {
                lower,
                chord,
                coarse,
            } = rho_eta_point(&c[..3], &c[3..], &gm).unwrap()
            else {
                unreachable!()
            };
            assert!(lower <= chord * (1.0 + 1e-14));
            assert!(chord <= coarse * (1.0 + 1e-14));
        }
    }

    #[test]
    fn symmetry_and_quasi_triangle() {
        // The chord cost is exactly symmetric, but only a quasi-metric: the chord
        // from x to y stays in the ball of radius max(|x|, |y|), so
        // d(x, y) <= exp(eta R^2) |x - y| <= exp(eta R^2) (d(x, w) + d(w, y)).
        let gm = GroundMetric::chord(0.5);
        let l2 = GroundMetric::l2();
        let z = make_stream(22, 0).uniforms(1000 * 9);
        for c in z.chunks_exact(9) {
            let p: Vec<f64> = c.iter().map(|u| 2.0 * u - 1.0).collect();
            let (x, rest) = p.split_at(3);
            let (y, w) = rest.split_at(3);
            let dxy = ground_cost(x, y, &gm);
            assert_eq!(dxy, ground_cost(y, x, &gm));
            let r2 = x
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .max(y.iter().map(|v| v * v).sum());
            let detour = ground_cost(x, w, &gm) + ground_cost(w, y, &gm);
            assert!(dxy <= (gm.eta * r2).exp() * detour * (1.0 + 1e-12));
            let (a, b, m) = (
                ground_cost(x, y, &l2),
                ground_cost(x, w, &l2),
                ground_cost(w, y, &l2),
            );
            assert!(a <= b + m + 1e-12);
        }
    }

    #[test]
    fn triangle_holds_when_the_weight_is_nearly_flat() {
        let gm = GroundMetric::chord(0.5);
        let z = make_stream(23, 0).uniforms(1000 * 9);
        for c in z.chunks_exact(9) {
            let p: Vec<f64> = c.iter().map(|u| (2.0 * u - 1.0) * 0.3).collect();
            let (x, rest) = p.split_at(3);
            let (y, w) = rest.split_at(3);
            assert!(
                ground_cost(x, y, &gm) <= ground_cost(x, w, &gm) + ground_cost(w, y, &gm) + 1e-9
            );
        }
    }

    #[test]
    fn chord_is_not_a_metric_far_from_the_origin() {
        // Two points on a circle of radius R at 90 degrees: the chord stays near
        // radius R, while the detour through the origin is cheaper.
        let r = 3.0;
        let gm = GroundMetric::chord(1.0);
        let x = [r, 0.0];
        let y = [0.0, r];
        let o = [0.0, 0.0];
        assert!(ground_cost(&x, &y, &gm) > ground_cost(&x, &o, &gm) + ground_cost(&o, &y, &gm));
    }

    #[test]
    fn mismatched_dimensions() {
        assert!(rho_eta_point(&[1.0], &[1.0, 2.0], &GroundMetric::l2()).is_err());
    }
}
