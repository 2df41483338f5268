//! The toy and SPDE systems behind one replica-level interface: burn in from
//! the origin, then advance several systems on one shared noise path.

use super::config::{StudyConfig, SystemChoice};
use crate::numerics::{make_stream, IncrementSource, RngStream};
use crate::sde::{CorrectorStepper, Scheme, Stepper};
use crate::spectral::{
    forcing_basis, ForcingSet, Grid2D, SpdeParams, SpdeStepper, ThetaField, VelocityField,
};
use crate::toy::{limit_velocity, make_instance, ToyInstance, ToyState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Sys {
    Limit,
    Eps(f64),
    Corrector(f64),
    /// SPDE only: the limit system with `-lambda P_N theta` added.
    Damped {
        lambda: f64,
        n_proj: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Start {
    Toy(ToyState),
    Spde { theta: ThetaField, u: VelocityField },
}

pub(crate) enum Model {
    Toy {
        inst: ToyInstance,
        dt: f64,
    },
    Spde {
        params: SpdeParams,
        forcing: ForcingSet,
        dt: f64,
        sigma_scale: f64,
    },
}

impl Model {
    pub fn from_config(cfg: &StudyConfig) -> Result<Self> {
        let dt = cfg.dt();
        Ok(match cfg.system {
            SystemChoice::Toy => {
                let t = cfg
                    .toy
                    .as_ref()
                    .ok_or_else(|| Error::Config("toy: missing".into()))?;
                let inst = make_instance(
                    t.m1,
                    t.m2,
                    t.n_forced,
                    t.ra,
                    t.noise_scale,
                    &make_stream(t.instance_seed, 0),
                )?;
                Model::Toy {
                    inst: if t.linear { inst.linearized() } else { inst },
                    dt,
                }
            }
            SystemChoice::Spde => {
                let s = cfg
                    .spde
                    .as_ref()
                    .ok_or_else(|| Error::Config("spde: missing".into()))?;
                let grid = s.grid()?;
                Model::Spde {
                    params: SpdeParams {
                        ra: s.ra,
                        ratilde: s.ratilde,
                        eps: 0.0,
                        n_forced: s.n_forced,
                        lambda_damp: 0.0,
                        n_proj: 0,
                    },
                    forcing: forcing_basis(&grid, s.n_forced)?,
                    dt,
                    sigma_scale: s.sigma_scale,
                }
            }
        })
    }

    pub fn dt(&self) -> f64 {
        match self {
            Model::Toy { dt, .. } | Model::Spde { dt, .. } => *dt,
        }
    }

    pub fn steps(&self, time: f64) -> usize {
        (time / self.dt()).round() as usize
    }

    pub fn grid(&self) -> Option<Grid2D> {
        match self {
            Model::Toy { .. } => None,
            Model::Spde { forcing, .. } => Some(forcing.grid),
        }
    }

    fn noise_dim(&self) -> usize {
        match self {
            Model::Toy { inst, .. } => inst.n_forced,
            Model::Spde { forcing, .. } => forcing.n(),
        }
    }

    fn source(&self, stream: &RngStream) -> Result<IncrementSource> {
        IncrementSource::new(stream, self.dt(), self.noise_dim())
    }

    /// Temperature as a plain vector whose Euclidean norm is the L2 norm.
    pub fn theta_vector(&self, s: &Start) -> Vec<f64> {
        match s {
            Start::Toy(t) => t.theta.clone(),
            Start::Spde { theta, .. } => scaled_values(theta),
        }
    }

    /// A start at temperature `theta` (given as a vector in the scaling of
    /// [`Model::theta_vector`]) with the slaved velocity.
    pub fn start_at(&self, theta: &[f64]) -> Result<Start> {
        match self {
            Model::Toy { inst, .. } => {
                let mut s = ToyState::zeros(inst);
                s.theta.copy_from_slice(theta);
                s.u = limit_velocity(inst, theta);
                Ok(Start::Toy(s))
            }
            Model::Spde {
                params, forcing, ..
            } => {
                let grid = forcing.grid;
                let w = (grid.dx() * grid.dz()).sqrt();
                let th = ThetaField::new(grid, theta.iter().map(|v| v / w).collect())?;
                let u = crate::spectral::stokes_solve(&grid, &th, params.ra)?;
                Ok(Start::Spde { theta: th, u })
            }
        }
    }

    /// Run system `eps` (0 is the limit) from the origin for `time`; the end
    /// state approximates a draw from its stationary law.
    pub fn burn_in(&self, eps: f64, time: f64, stream: &RngStream) -> Result<Start> {
        let n = self.steps(time);
        let mut src = self.source(stream)?;
        let mut dw = vec![0.0; self.noise_dim()];
        match self {
            Model::Toy { inst, dt } => {
                let mut st = Stepper::for_eps(inst, eps, *dt, Scheme::StiffExponential)?;
                let mut s = ToyState::zeros(inst);
                for _ in 0..n {
                    src.next_into(&mut dw);
                    st.step(inst, &mut s, &dw);
                }
                if !s.is_finite() {
                    return Err(Error::NonFinite("burn-in state".into()));
                }
                s.t = 0.0;
                Ok(Start::Toy(s))
            }
            Model::Spde {
                params,
                forcing,
                dt,
                sigma_scale,
            } => {
                let grid = forcing.grid;
                let zero = ThetaField::zeros(grid);
                let mut st = if eps > 0.0 {
                    SpdeStepper::eps_system(
                        &params.with_eps(eps),
                        forcing,
                        &VelocityField::zeros(grid),
                        &zero,
                        *dt,
                    )?
                } else {
                    SpdeStepper::limit(params, forcing, &zero, *dt)?
                };
                for _ in 0..n {
                    src.next_into(&mut dw);
                    scale(&mut dw, *sigma_scale);
                    st.step(&dw)?;
                }
                Ok(Start::Spde {
                    theta: st.theta(),
                    u: st.velocity(),
                })
            }
        }
    }

    /// Advance every `(system, start)` job on the increments of `stream` and
    /// return the temperatures `[checkpoint][job]` after each step count in
    /// `record` (ascending; 0 records the start).
    pub fn run(
        &self,
        jobs: &[(Sys, &Start)],
        stream: &RngStream,
        record: &[usize],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let n = record.last().copied().unwrap_or(0);
        let mut src = self.source(stream)?;
        let mut dw = vec![0.0; self.noise_dim()];
        let mut out = Vec::with_capacity(record.len());
        let mut next = 0;
        match self {
            Model::Toy { inst, dt } => {
                let mut runs = Vec::with_capacity(jobs.len());
                for (sys, start) in jobs {
                    let Start::Toy(s0) = start else {
                        return Err(Error::invalid("toy model needs toy start states"));
                    };
                    let mut s = s0.clone();
                    let st = match *sys {
                        Sys::Limit => {
                            s.u = limit_velocity(inst, &s.theta);
                            Stepper::for_eps(inst, 0.0, *dt, Scheme::StiffExponential)?
                        }
                        Sys::Eps(eps) => {
                            Stepper::for_eps(inst, eps, *dt, Scheme::StiffExponential)?
                        }
                        Sys::Corrector(eps) => Stepper::Corrector(CorrectorStepper::new(
                            inst, eps, *dt, 0.0, &s.u, &s.theta,
                        )?),
                        Sys::Damped { .. } => {
                            return Err(Error::invalid("the damped system is SPDE only"))
                        }
                    };
                    runs.push((st, s));
                }
                for k in 0..=n {
                    if k > 0 {
                        src.next_into(&mut dw);
                        for (st, s) in runs.iter_mut() {
                            st.step(inst, s, &dw);
                        }
                    }
                    while next < record.len() && record[next] == k {
                        if runs.iter().any(|(_, s)| !s.is_finite()) {
                            return Err(Error::NonFinite(format!("toy state at step {k}")));
                        }
                        out.push(runs.iter().map(|(_, s)| s.theta.clone()).collect());
                        next += 1;
                    }
                }
            }
            Model::Spde {
                params,
                forcing,
                dt,
                sigma_scale,
            } => {
                let mut runs = Vec::with_capacity(jobs.len());
                for (sys, start) in jobs {
                    let Start::Spde { theta, u } = start else {
                        return Err(Error::invalid("SPDE model needs field start states"));
                    };
                    runs.push(match *sys {
                        Sys::Limit => SpdeStepper::limit(params, forcing, theta, *dt)?,
                        Sys::Eps(eps) => {
                            SpdeStepper::eps_system(&params.with_eps(eps), forcing, u, theta, *dt)?
                        }
                        Sys::Corrector(eps) => {
                            SpdeStepper::corrector(&params.with_eps(eps), forcing, u, theta, *dt)?
                        }
                        Sys::Damped { lambda, n_proj } => {
                            let p = SpdeParams {
                                lambda_damp: lambda,
                                n_proj,
                                ..*params
                            };
                            SpdeStepper::damped(&p, forcing, theta, *dt)?
                        }
                    });
                }
                for k in 0..=n {
                    if k > 0 {
                        src.next_into(&mut dw);
                        scale(&mut dw, *sigma_scale);
                        for st in runs.iter_mut() {
                            st.step(&dw)?;
                        }
                    }
                    while next < record.len() && record[next] == k {
                        out.push(
                            runs.iter_mut()
                                .map(|st| scaled_values(&st.theta()))
                                .collect(),
                        );
                        next += 1;
                    }
                }
            }
        }
        if next != record.len() {
            return Err(Error::invalid("record steps must be ascending"));
        }
        Ok(out)
    }
}

pub(crate) fn scale(dw: &mut [f64], a: f64) {
    if a != 1.0 {
        dw.iter_mut().for_each(|x| *x *= a);
    }
}

fn scaled_values(theta: &ThetaField) -> Vec<f64> {
    let w = (theta.grid.dx() * theta.grid.dz()).sqrt();
    theta.values.iter().map(|v| v * w).collect()
}

/// Smooth random temperature: normal coefficients on the first `n_modes`
/// Laplacian modes, rescaled to L2 norm `radius`.
pub(crate) fn random_field(
    grid: &Grid2D,
    n_modes: usize,
    radius: f64,
    stream: &RngStream,
) -> Result<ThetaField> {
    let basis = forcing_basis(grid, n_modes)?;
    let z = stream.normals(n_modes);
    let mut out = ThetaField::zeros(*grid);
    for (mode, c) in basis.modes.iter().zip(&z) {
        for (o, v) in out.values.iter_mut().zip(&mode.values) {
            *o += c * v;
        }
    }
    let n = out.norm();
    Ok(if n > 0.0 { out.scaled(radius / n) } else { out })
}
