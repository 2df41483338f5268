//! Precomputed one-step maps. All matrices that depend only on `(inst, eps, dt)`
//! are formed once; each stepper owns scratch space and is cheap to clone per replica.

use crate::numerics::{matrix_exp_action, Dense};
use crate::toy::{ToyInstance, ToyState};
use crate::{Error, Result};

use super::Scheme;

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// `phi(x) = (1 - e^{-x}) / x`, accurate near 0.
fn phi1(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// The semi-implicit temperature update shared by every system:
/// `(I + dt a2) theta+ = theta - dt b2(w, theta) + sigma dW`.
#[derive(Debug, Clone)]
struct ThetaUpdate {
    dt: f64,
    resolvent: Dense,
    b2: Vec<f64>,
    rhs: Vec<f64>,
    kick: Vec<f64>,
}

impl ThetaUpdate {
    fn new(inst: &ToyInstance, dt: f64) -> Self {
        Self {
            dt,
            resolvent: inst.a2.function_matrix(|l| 1.0 / (1.0 + dt * l)),
            b2: vec![0.0; inst.m2],
            rhs: vec![0.0; inst.m2],
            kick: vec![0.0; inst.m2],
        }
    }

    fn apply(&mut self, inst: &ToyInstance, w: &[f64], theta: &mut [f64], dw: &[f64]) {
        inst.b2_into(w, theta, &mut self.b2);
        inst.sigma.matvec_into(dw, &mut self.kick);
        for i in 0..theta.len() {
            self.rhs[i] = theta[i] - self.dt * self.b2[i] + self.kick[i];
        }
        self.resolvent.matvec_into(&self.rhs, theta);
    }
}

/// The `eps = 0` system: `u = a1^{-1} Ra e theta` at every instant.
#[derive(Debug, Clone)]
pub struct LimitStepper {
    slave: Dense,
    theta: ThetaUpdate,
    w: Vec<f64>,
}

impl LimitStepper {
    pub fn new(inst: &ToyInstance, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            slave: slaving_matrix(inst),
            theta: ThetaUpdate::new(inst, dt),
            w: vec![0.0; inst.m1],
        })
    }

    pub fn step(&mut self, inst: &ToyInstance, s: &mut ToyState, dw: &[f64]) {
        self.slave.matvec_into(&s.theta, &mut self.w);
        self.theta.apply(inst, &self.w, &mut s.theta, dw);
        self.slave.matvec_into(&s.theta, &mut s.u);
        s.t += self.theta.dt;
    }
}

/// `a1^{-1} Ra e`, the map from temperature to slaved velocity.
fn slaving_matrix(inst: &ToyInstance) -> Dense {
    let mut m = inst.a1.function_matrix(|l| 1.0 / l).matmul(&inst.e);
    m.scale(inst.ra);
    m
}

/// The eps-system. In the stiff scheme the velocity obeys, over one step with
/// `theta` and the lagged `b1(u,u)` frozen,
/// `u(s) = u* + exp(-a1 s/eps)(u - u*)`, `u* = a1^{-1}(Ra e theta - eps b1(u,u))`,
/// which is integrated exactly. The temperature is advanced with the time
/// average of that velocity over the step, so the coupling does not degrade
/// when `dt >> eps`.
#[derive(Debug, Clone)]
pub struct EpsStepper {
    pub eps: f64,
    scheme: Scheme,
    slave: Dense,
    a1inv: Dense,
    a1: Dense,
    decay: Dense,
    average: Dense,
    theta: ThetaUpdate,
    target: Vec<f64>,
    b1: Vec<f64>,
    dev: Vec<f64>,
    tmp: Vec<f64>,
    w: Vec<f64>,
}

impl EpsStepper {
    pub fn new(inst: &ToyInstance, eps: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        check_dt(dt)?;
        check_eps(eps)?;
        let r = dt / eps;
        let m1 = inst.m1;
        Ok(Self {
            eps,
            scheme,
            slave: slaving_matrix(inst),
            a1inv: inst.a1.function_matrix(|l| 1.0 / l),
            a1: inst.a1.as_dense(),
            decay: inst.a1.function_matrix(|l| (-l * r).exp()),
            average: inst.a1.function_matrix(|l| phi1(l * r)),
            theta: ThetaUpdate::new(inst, dt),
            target: vec![0.0; m1],
            b1: vec![0.0; m1],
            dev: vec![0.0; m1],
            tmp: vec![0.0; m1],
            w: vec![0.0; m1],
        })
    }

    /// Velocity update alone, with `theta` held fixed; returns the step-averaged
    /// velocity in `self.w`.
    fn advance_velocity(&mut self, inst: &ToyInstance, u: &mut [f64], theta: &[f64]) {
        let dt = self.theta.dt;
        match self.scheme {
            Scheme::StiffExponential => {
                inst.b1_into(u, u, &mut self.b1);
                self.a1inv.matvec_into(&self.b1, &mut self.tmp);
                self.slave.matvec_into(theta, &mut self.target);
                for i in 0..u.len() {
                    self.target[i] -= self.eps * self.tmp[i];
                    self.dev[i] = u[i] - self.target[i];
                }
                self.average.matvec_into(&self.dev, &mut self.w);
                self.decay.matvec_into(&self.dev, &mut self.tmp);
                for i in 0..u.len() {
                    self.w[i] += self.target[i];
                    u[i] = self.target[i] + self.tmp[i];
                }
            }
            Scheme::EulerMaruyama => {
                inst.b1_into(u, u, &mut self.b1);
                self.a1.matvec_into(u, &mut self.tmp);
                self.slave.matvec_into(theta, &mut self.target);
                // slave = a1^{-1} Ra e, so Ra e theta = a1 * target
                self.a1.matvec_into(&self.target, &mut self.dev);
                self.w.copy_from_slice(u);
                for i in 0..u.len() {
                    u[i] += dt * ((self.dev[i] - self.tmp[i]) / self.eps - self.b1[i]);
                }
            }
        }
    }

    pub fn step(&mut self, inst: &ToyInstance, s: &mut ToyState, dw: &[f64]) {
        self.advance_velocity(inst, &mut s.u, &s.theta);
        let w = std::mem::take(&mut self.w);
        self.theta.apply(inst, &w, &mut s.theta, dw);
        self.w = w;
        s.t += self.theta.dt;
    }

    /// One exact Duhamel step of the velocity with `theta` frozen.
    pub fn velocity_step(&mut self, inst: &ToyInstance, u: &mut [f64], theta: &[f64]) {
        self.advance_velocity(inst, u, theta);
    }
}

/// The corrector: `u~(t) = a1^{-1} Ra e theta~(t) + exp(-a1 t/eps)(u0 - a1^{-1} Ra e theta0)`.
/// The transient `exp(-a1 t/eps)(...)` is carried as state and averaged exactly
/// over each step, as in [`EpsStepper`].
#[derive(Debug, Clone)]
pub struct CorrectorStepper {
    pub eps: f64,
    slave: Dense,
    decay: Dense,
    average: Dense,
    theta: ThetaUpdate,
    transient: Vec<f64>,
    w: Vec<f64>,
    tmp: Vec<f64>,
}

impl CorrectorStepper {
    /// Stepper positioned at time `t` of a corrector started from `(u0, theta0)` at time 0.
    pub fn new(
        inst: &ToyInstance,
        eps: f64,
        dt: f64,
        t: f64,
        u0: &[f64],
        theta0: &[f64],
    ) -> Result<Self> {
        check_dt(dt)?;
        check_eps(eps)?;
        if t < 0.0 {
            return Err(Error::invalid("corrector time must be non-negative"));
        }
        if u0.len() != inst.m1 || theta0.len() != inst.m2 {
            return Err(Error::DimensionMismatch {
                expected: inst.m1 + inst.m2,
                found: u0.len() + theta0.len(),
            });
        }
        let slave = slaving_matrix(inst);
        let s0 = slave.matvec(theta0);
        let w0: Vec<f64> = u0.iter().zip(&s0).map(|(a, b)| a - b).collect();
        let transient = matrix_exp_action(&inst.a1, -t / eps, &w0)?;
        let r = dt / eps;
        Ok(Self {
            eps,
            decay: inst.a1.function_matrix(|l| (-l * r).exp()),
            average: inst.a1.function_matrix(|l| phi1(l * r)),
            slave,
            theta: ThetaUpdate::new(inst, dt),
            transient,
            w: vec![0.0; inst.m1],
            tmp: vec![0.0; inst.m1],
        })
    }

    pub fn step(&mut self, inst: &ToyInstance, s: &mut ToyState, dw: &[f64]) {
        self.slave.matvec_into(&s.theta, &mut self.w);
        self.average.matvec_into(&self.transient, &mut self.tmp);
        for (w, t) in self.w.iter_mut().zip(&self.tmp) {
            *w += t;
        }
        self.theta.apply(inst, &self.w, &mut s.theta, dw);
        self.decay.matvec_into(&self.transient, &mut self.tmp);
        std::mem::swap(&mut self.transient, &mut self.tmp);
        self.slave.matvec_into(&s.theta, &mut s.u);
        for (u, t) in s.u.iter_mut().zip(&self.transient) {
            *u += t;
        }
        s.t += self.theta.dt;
    }
}

/// Any of the three systems behind one interface.
#[derive(Debug, Clone)]
pub enum Stepper {
    Limit(LimitStepper),
    Eps(EpsStepper),
    Corrector(CorrectorStepper),
}

impl Stepper {
    /// `eps == 0` selects the limit system.
    pub fn for_eps(inst: &ToyInstance, eps: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        if eps == 0.0 {
            LimitStepper::new(inst, dt).map(Stepper::Limit)
        } else {
            EpsStepper::new(inst, eps, dt, scheme).map(Stepper::Eps)
        }
    }

    pub fn step(&mut self, inst: &ToyInstance, s: &mut ToyState, dw: &[f64]) {
        match self {
            Stepper::Limit(x) => x.step(inst, s, dw),
            Stepper::Eps(x) => x.step(inst, s, dw),
            Stepper::Corrector(x) => x.step(inst, s, dw),
        }
    }
}
