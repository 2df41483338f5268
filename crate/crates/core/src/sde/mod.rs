//! Time stepping for the toy eps-system, its limit and the corrector, with
//! shared-noise coupling and stationary sampling.

mod io;
mod stepper;

pub use io::{read_checkpoint, write_checkpoint, write_trajectory_csv, Checkpoint};
pub use stepper::{CorrectorStepper, EpsStepper, LimitStepper, Stepper};

use serde::{Deserialize, Serialize};

use crate::numerics::{IncrementSource, NoisePath, RngStream};
use crate::par::map_indexed;
use crate::toy::{ToyInstance, ToyState};
use crate::transport::EmpiricalMeasure;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    StiffExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// Save every `save_stride` steps (the final state is always saved).
    #[serde(default = "one")]
    pub save_stride: usize,
}

fn one() -> usize {
    1
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Result<Self> {
        let s = Self {
            scheme,
            dt,
            t_end,
            save_stride: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn stiff(dt: f64, t_end: f64) -> Result<Self> {
        Self::new(Scheme::StiffExponential, dt, t_end)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-12)) || !self.t_end.is_finite() {
            return Err(Error::invalid("t_end must be at least dt"));
        }
        if self.save_stride == 0 {
            return Err(Error::invalid("save_stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps, `t_end / dt` rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// One step of the limit system.
pub fn step_limit(inst: &ToyInstance, s: &ToyState, dw: &[f64], dt: f64) -> Result<ToyState> {
    check_noise(inst, dw)?;
    let mut out = s.clone();
    LimitStepper::new(inst, dt)?.step(inst, &mut out, dw);
    Ok(out)
}

/// One stiff exponential step of the eps-system.
pub fn step_eps_stiff(
    inst: &ToyInstance,
    s: &ToyState,
    eps: f64,
    dw: &[f64],
    dt: f64,
) -> Result<ToyState> {
    check_noise(inst, dw)?;
    let mut out = s.clone();
    EpsStepper::new(inst, eps, dt, Scheme::StiffExponential)?.step(inst, &mut out, dw);
    Ok(out)
}

/// One corrector step from time `t`, for a corrector started at `(u0, theta0)`.
#[allow(clippy::too_many_arguments)]
pub fn step_corrector(
    inst: &ToyInstance,
    s: &ToyState,
    eps: f64,
    t: f64,
    dw: &[f64],
    dt: f64,
    u0: &[f64],
    theta0: &[f64],
) -> Result<ToyState> {
    check_noise(inst, dw)?;
    let mut out = s.clone();
    CorrectorStepper::new(inst, eps, dt, t, u0, theta0)?.step(inst, &mut out, dw);
    Ok(out)
}

/// Exact Duhamel velocity step with `theta` frozen (lagged `b1`).
pub fn velocity_duhamel_step(
    inst: &ToyInstance,
    u: &[f64],
    theta: &[f64],
    eps: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut out = u.to_vec();
    EpsStepper::new(inst, eps, dt, Scheme::StiffExponential)?.velocity_step(inst, &mut out, theta);
    Ok(out)
}

fn check_noise(inst: &ToyInstance, dw: &[f64]) -> Result<()> {
    if dw.len() != inst.n_forced {
        return Err(Error::DimensionMismatch {
            expected: inst.n_forced,
            found: dw.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledTrajectories {
    pub eps_values: Vec<f64>,
    pub times: Vec<f64>,
    /// `states[k][j]` is system `eps_values[k]` at `times[j]`.
    pub states: Vec<Vec<ToyState>>,
    /// Corrector runs for each positive eps, in the order of `eps_values`.
    pub corrector: Vec<(f64, Vec<ToyState>)>,
    pub path_origin: RngStream,
    pub dt: f64,
}

impl CoupledTrajectories {
    pub fn series(&self, eps: f64) -> Option<&[ToyState]> {
        self.eps_values
            .iter()
            .position(|e| *e == eps)
            .map(|k| self.states[k].as_slice())
    }
}

/// Run every listed system (eps = 0 is the limit) and optionally the
/// correctors, all on the increments of `path`.
pub fn simulate_coupled(
    inst: &ToyInstance,
    eps_values: &[f64],
    init: &ToyState,
    spec: &IntegratorSpec,
    path: &NoisePath,
    include_corrector: bool,
) -> Result<CoupledTrajectories> {
    spec.validate()?;
    if eps_values.is_empty() {
        return Err(Error::invalid("no eps values"));
    }
    for (i, a) in eps_values.iter().enumerate() {
        if !(*a >= 0.0) {
            return Err(Error::invalid(format!("eps must be non-negative, got {a}")));
        }
        if eps_values[..i].contains(a) {
            return Err(Error::invalid(format!("eps value {a} listed twice")));
        }
    }
    if (path.dt - spec.dt).abs() > 1e-12 * spec.dt {
        return Err(Error::invalid(format!(
            "path dt {} differs from integrator dt {}",
            path.dt, spec.dt
        )));
    }
    if path.dim != inst.n_forced {
        return Err(Error::DimensionMismatch {
            expected: inst.n_forced,
            found: path.dim,
        });
    }
    let n = spec.n_steps();
    if path.n_steps < n {
        return Err(Error::PathTooShort {
            needed: n,
            available: path.n_steps,
        });
    }
    if init.u.len() != inst.m1 || init.theta.len() != inst.m2 {
        return Err(Error::DimensionMismatch {
            expected: inst.m1 + inst.m2,
            found: init.u.len() + init.theta.len(),
        });
    }
    let mut times = vec![init.t];
    for k in 1..=n {
        if k % spec.save_stride == 0 || k == n {
            times.push(init.t + k as f64 * spec.dt);
        }
    }
    let run = |mut stepper: Stepper, start: ToyState| -> Result<Vec<ToyState>> {
        let mut s = start;
        let mut out = vec![s.clone()];
        for k in 1..=n {
            stepper.step(inst, &mut s, path.increment(k - 1));
            if k % spec.save_stride == 0 || k == n {
                if !s.is_finite() {
                    return Err(Error::NonFinite(format!("state at step {k}")));
                }
                out.push(s.clone());
            }
        }
        Ok(out)
    };
    let mut states = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let mut start = init.clone();
        if eps == 0.0 {
            start.u = crate::toy::limit_velocity(inst, &init.theta);
        }
        states.push(run(
            Stepper::for_eps(inst, eps, spec.dt, spec.scheme)?,
            start,
        )?);
    }
    let mut corrector = Vec::new();
    if include_corrector {
        for &eps in eps_values.iter().filter(|e| **e > 0.0) {
            let st = CorrectorStepper::new(inst, eps, spec.dt, 0.0, &init.u, &init.theta)?;
            corrector.push((eps, run(Stepper::Corrector(st), init.clone())?));
        }
    }
    Ok(CoupledTrajectories {
        eps_values: eps_values.to_vec(),
        times,
        states,
        corrector,
        path_origin: path.origin,
        dt: spec.dt,
    })
}

fn steps_for(time: f64, dt: f64) -> usize {
    (time / dt).round() as usize
}

/// One long chain from the origin, sampled every `thin` after `burn_in`.
/// Samples are `(u, theta)`, or `theta` alone for `eps = 0`.
pub fn sample_stationary(
    inst: &ToyInstance,
    eps: f64,
    spec: &IntegratorSpec,
    burn_in: f64,
    n_samples: usize,
    thin: f64,
    stream: &RngStream,
) -> Result<EmpiricalMeasure> {
    spec.validate()?;
    if !(burn_in >= 0.0) || !(thin >= spec.dt * (1.0 - 1e-12)) || n_samples == 0 {
        return Err(Error::invalid(
            "need burn_in >= 0, thin >= dt and n_samples >= 1",
        ));
    }
    let mut stepper = Stepper::for_eps(inst, eps, spec.dt, spec.scheme)?;
    let mut src = IncrementSource::new(stream, spec.dt, inst.n_forced)?;
    let mut dw = vec![0.0; inst.n_forced];
    let mut s = ToyState::zeros(inst);
    let mut advance = |s: &mut ToyState, k: usize| {
        for _ in 0..k {
            src.next_into(&mut dw);
            stepper.step(inst, s, &dw);
        }
    };
    advance(&mut s, steps_for(burn_in, spec.dt));
    let stride = steps_for(thin, spec.dt).max(1);
    let dim = if eps == 0.0 {
        inst.m2
    } else {
        inst.m1 + inst.m2
    };
    let mut samples = Vec::with_capacity(n_samples * dim);
    for i in 0..n_samples {
        if i > 0 {
            advance(&mut s, stride);
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("chain state at sample {i}")));
        }
        if eps == 0.0 {
            samples.extend_from_slice(&s.theta);
        } else {
            samples.extend_from_slice(&s.u);
            samples.extend_from_slice(&s.theta);
        }
    }
    Ok(EmpiricalMeasure::uniform(dim, samples)?.with_meta(format!(
        "chain eps={eps} dt={} burn_in={burn_in} thin={thin} seed={}:{}",
        spec.dt, stream.root_seed, stream.stream_id
    )))
}

/// End states of `n` independent chains run for `burn_in` from `init`; replica
/// `i` draws from `stream.child(i)`.
pub fn sample_replicas(
    inst: &ToyInstance,
    eps: f64,
    spec: &IntegratorSpec,
    init: &ToyState,
    burn_in: f64,
    n: usize,
    stream: &RngStream,
) -> Result<Vec<ToyState>> {
    spec.validate()?;
    let proto = Stepper::for_eps(inst, eps, spec.dt, spec.scheme)?;
    let steps = steps_for(burn_in, spec.dt);
    let out = map_indexed(n, |i| -> Result<ToyState> {
        let mut stepper = proto.clone();
        let mut src = IncrementSource::new(&stream.child(i as u64), spec.dt, inst.n_forced)?;
        let mut dw = vec![0.0; inst.n_forced];
        let mut s = init.clone();
        if eps == 0.0 {
            s.u = crate::toy::limit_velocity(inst, &s.theta);
        }
        for _ in 0..steps {
            src.next_into(&mut dw);
            stepper.step(inst, &mut s, &dw);
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("replica {i}")));
        }
        s.t = 0.0;
        Ok(s)
    });
    out.into_iter().collect()
}

/// The two energy functionals of the exponential martingale bounds along one path:
/// `sup_s (|theta(s)|^2 + int_0^s |theta|^2 - |sigma|^2 s) - |theta0|^2` and
/// `|theta(t)|^2 - |sigma|^2 - e^{-t}|theta0|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyFunctionals {
    pub running_sup: f64,
    pub terminal: f64,
}

/// Energy functionals over `n_paths` independent paths of the system `eps`
/// (0 for the limit), path `i` driven by `stream.child(i)`.
pub fn energy_functionals(
    inst: &ToyInstance,
    eps: f64,
    spec: &IntegratorSpec,
    init: &ToyState,
    n_paths: usize,
    stream: &RngStream,
) -> Result<Vec<EnergyFunctionals>> {
    spec.validate()?;
    let proto = Stepper::for_eps(inst, eps, spec.dt, spec.scheme)?;
    let n = spec.n_steps();
    let s2 = inst.sigma_sq();
    let t_end = n as f64 * spec.dt;
    let th0: f64 = init.theta.iter().map(|x| x * x).sum();
    let out = map_indexed(n_paths, |i| -> Result<EnergyFunctionals> {
        let mut stepper = proto.clone();
        let mut src = IncrementSource::new(&stream.child(i as u64), spec.dt, inst.n_forced)?;
        let mut dw = vec![0.0; inst.n_forced];
        let mut s = init.clone();
        if eps == 0.0 {
            s.u = crate::toy::limit_velocity(inst, &s.theta);
        }
        let (mut integral, mut sup) = (0.0, th0);
        let mut prev = th0;
        for k in 1..=n {
            src.next_into(&mut dw);
            stepper.step(inst, &mut s, &dw);
            let cur: f64 = s.theta.iter().map(|x| x * x).sum();
            integral += 0.5 * (prev + cur) * spec.dt;
            prev = cur;
            sup = sup.max(cur + integral - s2 * k as f64 * spec.dt);
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("path {i}")));
        }
        Ok(EnergyFunctionals {
            running_sup: sup - th0,
            terminal: prev - s2 - (-t_end).exp() * th0,
        })
    });
    out.into_iter().collect()
}
