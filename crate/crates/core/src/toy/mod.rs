//! The finite-dimensional slow/fast toy system
//!
//! ```text
//! eps (du/dt + b1(u,u)) + a1 u = Ra e(theta)
//! d theta + (b2(u,theta) + a2 theta) dt = sigma dW
//! ```
//!
//! together with its formal `eps = 0` limit (`a1 u = Ra e theta`) and the
//! corrector whose velocity carries an explicit `exp(-a1 t / eps)` transient.

mod instance;

pub use instance::{make_instance, ToyInstance, ToyInstanceData};

use crate::numerics::{matrix_exp_action, pairwise_sum};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyState {
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub t: f64,
}

impl ToyState {
    pub fn zeros(inst: &ToyInstance) -> Self {
        Self {
            u: vec![0.0; inst.m1],
            theta: vec![0.0; inst.m2],
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.theta).all(|x| x.is_finite()) && self.t.is_finite()
    }

    /// `u` followed by `theta`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.u.clone();
        v.extend_from_slice(&self.theta);
        v
    }
}

/// Velocity and deterministic temperature drift of the eps-system.
///
/// `du = (Ra e theta - a1 u)/eps - b1(u,u)`, `dtheta_det = -b2(u,theta) - a2 theta`.
pub fn drift_eps(inst: &ToyInstance, s: &ToyState, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "drift_eps needs eps > 0 (got {eps}); use limit_velocity for the limit system"
        )));
    }
    let forcing = inst.buoyancy(&s.theta);
    let a1u = inst.a1.mul_vec(&s.u);
    let b1 = inst.b1(&s.u, &s.u);
    let du = (0..inst.m1)
        .map(|i| (forcing[i] - a1u[i]) / eps - b1[i])
        .collect();
    let b2 = inst.b2(&s.u, &s.theta);
    let a2t = inst.a2.mul_vec(&s.theta);
    let dtheta = (0..inst.m2).map(|i| -b2[i] - a2t[i]).collect();
    Ok((du, dtheta))
}

/// Slaved velocity of the limit system: solves `a1 u = Ra e theta`.
pub fn limit_velocity(inst: &ToyInstance, theta: &[f64]) -> Vec<f64> {
    inst.a1
        .solve(&inst.buoyancy(theta))
        .expect("a1 is elliptic, hence invertible")
}

/// Corrector velocity
/// `exp(-a1 t/eps) u0 + a1^{-1}(Ra e theta_tilde) - exp(-a1 t/eps) a1^{-1}(Ra e theta0)`.
pub fn corrector_velocity(
    inst: &ToyInstance,
    theta_tilde: &[f64],
    t: f64,
    eps: f64,
    u0: &[f64],
    theta0: &[f64],
) -> Result<Vec<f64>> {
    if !(eps > 0.0) || t < 0.0 {
        return Err(Error::invalid(
            "corrector_velocity needs eps > 0 and t >= 0",
        ));
    }
    let scale = -t / eps;
    let decayed_u0 = matrix_exp_action(&inst.a1, scale, u0)?;
    let slaved = limit_velocity(inst, theta_tilde);
    let slaved0 = limit_velocity(inst, theta0);
    let decayed_slaved0 = matrix_exp_action(&inst.a1, scale, &slaved0)?;
    Ok((0..inst.m1)
        .map(|i| decayed_u0[i] + slaved[i] - decayed_slaved0[i])
        .collect())
}

/// Largest cancellation residual `|<b(v,x),x>| / (|v||x|^2)` over `trials`
/// random triples, for both bilinear maps.
pub fn cancellation_residual(
    inst: &ToyInstance,
    trials: usize,
    stream: &crate::numerics::RngStream,
) -> f64 {
    let draws = stream.normals(trials * (2 * inst.m1 + inst.m2));
    let mut worst = 0.0f64;
    for chunk in draws.chunks_exact(2 * inst.m1 + inst.m2) {
        let (v, rest) = chunk.split_at(inst.m1);
        let (u, th) = rest.split_at(inst.m1);
        let nv = crate::numerics::norm(v);
        let r1 = pairwise_sum(
            &inst
                .b1(v, u)
                .iter()
                .zip(u)
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        )
        .abs()
            / (nv * crate::numerics::dot(u, u));
        let r2 = pairwise_sum(
            &inst
                .b2(v, th)
                .iter()
                .zip(th)
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        )
        .abs()
            / (nv * crate::numerics::dot(th, th));
        worst = worst.max(r1).max(r2);
    }
    worst
}
