//! Browser bindings: a small toy convergence study, a snapshot of the
//! infinite-Prandtl temperature field, and the transport distance between two
//! Gaussian clouds. Each binding wraps a plain function that is tested natively.

use convlab::experiments::{run_finite_time_study, StudyConfig};
use convlab::numerics::make_stream;
use convlab::report::parse_config;
use convlab::spectral::{forcing_basis, Grid2D, SpdeParams, SpdeStepper, ThetaField};
use convlab::transport::{wasserstein, EmpiricalMeasure, GroundMetric, MetricMode};
use wasm_bindgen::prelude::*;

pub const NX: usize = 32;
pub const NZ: usize = 33;

fn toy_config(eps: &[f64], n_replicas: usize, seed: u64) -> convlab::Result<StudyConfig> {
    let text = serde_json::json!({
        "system": "toy",
        "toy": { "m1": 4, "m2": 4, "n_forced": 4, "ra": 1.0 },
        "eps_grid": eps,
        "n_replicas": n_replicas,
        "seed": seed,
        "dt": 1e-3,
        "burn_in": 1.0,
    });
    parse_config(&text.to_string())
}

/// Mean finite-time gap `E|theta^eps(1) - theta^0(1)|` per eps and its fitted
/// slope, as JSON `{"eps": [...], "mean": [...], "halfwidth3s": [...], "q": .., "q_halfwidth3s": ..}`.
pub fn toy_gaps(eps: &[f64], n_replicas: usize, seed: u64) -> convlab::Result<String> {
    let cfg = toy_config(eps, n_replicas, seed)?;
    let r = run_finite_time_study(&cfg)?;
    let s = r.series("l1");
    let fit = r.fit("l1");
    Ok(serde_json::json!({
        "eps": s.iter().map(|e| e.eps).collect::<Vec<_>>(),
        "mean": s.iter().map(|e| e.estimate).collect::<Vec<_>>(),
        "halfwidth3s": s.iter().map(|e| e.halfwidth3s).collect::<Vec<_>>(),
        "q": fit.map(|f| f.q),
        "q_halfwidth3s": fit.map(|f| f.q_halfwidth3s),
    })
    .to_string())
}

/// Temperature of the infinite-Prandtl limit on the 32 x 33 grid after `t`,
/// started from rest, row-major in `x` (index `i * NZ + j`).
pub fn limit_field(ra: f64, ratilde: f64, t: f64, seed: u64) -> convlab::Result<Vec<f64>> {
    let grid = Grid2D::new(1.0, NX, NZ)?;
    let params = SpdeParams {
        ra,
        ratilde,
        eps: 0.0,
        n_forced: 8,
        lambda_damp: 0.0,
        n_proj: 0,
    };
    let forcing = forcing_basis(&grid, params.n_forced)?;
    let dt = 2e-3;
    let mut s = SpdeStepper::limit(&params, &forcing, &ThetaField::zeros(grid), dt)?;
    let root = make_stream(seed, 0x5745);
    let sq = dt.sqrt();
    for k in 0..(t / dt).round() as u64 {
        let dw: Vec<f64> = root
            .child(k)
            .normals(s.noise_dim())
            .iter()
            .map(|z| z * sq)
            .collect();
        s.step(&dw)?;
    }
    Ok(s.theta().values)
}

/// Exact transport cost between two `n`-point standard Gaussian clouds in the
/// plane, the second shifted by `shift` along the first axis.
pub fn cloud_distance(n: usize, shift: f64, eta: f64, seed: u64) -> convlab::Result<f64> {
    let s = make_stream(seed, 0x4f54);
    let cloud = |tag: u64, dx: f64| -> convlab::Result<EmpiricalMeasure> {
        let mut v = s.child(tag).normals(2 * n);
        v.iter_mut().step_by(2).for_each(|x| *x += dx);
        EmpiricalMeasure::uniform(2, v)
    };
    let gm = GroundMetric::new(eta, MetricMode::ChordUpper)?;
    wasserstein(&cloud(0, 0.0)?, &cloud(1, shift)?, &gm)
}

fn js(e: convlab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = toyGaps)]
pub fn toy_gaps_js(eps: Vec<f64>, n_replicas: usize, seed: u32) -> Result<String, JsError> {
    toy_gaps(&eps, n_replicas, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = limitField)]
pub fn limit_field_js(ra: f64, ratilde: f64, t: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    limit_field(ra, ratilde, t, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = cloudDistance)]
pub fn cloud_distance_js(n: usize, shift: f64, eta: f64, seed: u32) -> Result<f64, JsError> {
    cloud_distance(n, shift, eta, seed as u64).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_gaps_shrink_with_eps() {
        let out: serde_json::Value =
            serde_json::from_str(&toy_gaps(&[0.1, 0.01], 16, 3).unwrap()).unwrap();
        let m = out["mean"].as_array().unwrap();
        assert!(m[1].as_f64().unwrap() < m[0].as_f64().unwrap());
        assert!(out["q"].as_f64().unwrap() > 0.0);
        assert!(toy_gaps(&[0.01, 0.1], 16, 3).is_err());
    }

    #[test]
    fn limit_field_has_grid_shape_and_moves() {
        let f = limit_field(50.0, 1.0, 0.05, 1).unwrap();
        assert_eq!(f.len(), NX * NZ);
        assert!(f.iter().all(|x| x.is_finite()));
        assert!(f.iter().any(|x| *x != 0.0));
        assert_eq!(f, limit_field(50.0, 1.0, 0.05, 1).unwrap());
    }

    #[test]
    fn cloud_distance_grows_with_shift() {
        let near = cloud_distance(40, 0.0, 0.0, 2).unwrap();
        let far = cloud_distance(40, 3.0, 0.0, 2).unwrap();
        assert!(far > near && far > 2.0);
        assert!(cloud_distance(40, 1.0, -1.0, 2).is_err());
    }
}
