//! Two-dimensional stochastic Boussinesq convection in a channel, periodic in
//! `x` with no-slip, fixed-temperature walls at `z = 0, 1`, in homogeneous
//! (perturbation) form:
//!
//! ```text
//! eps (du/dt + u.grad u) - lap u = grad p + Ra k theta,   div u = 0
//! d theta + u.grad theta dt = Ra~ u3 dt + lap theta dt + sum_k sigma_k dW^k
//! ```
//!
//! Fourier collocation in `x`, second-order finite differences in `z` on the
//! interior levels `z_j = (j + 1) dz`, `dz = 1 / (nz + 1)`. The velocity is
//! carried by a streamfunction, `u = (dz psi, -dx psi)`, plus the horizontal
//! mean flow `U(z)`, so the discrete divergence vanishes identically.
//!
//! Temperature steps are IMEX Euler: diffusion (and any `P_N` damping)
//! implicit, advection in skew form and the `Ra~ u3` source explicit.
//! Diffusion is inverted exactly in the Fourier x sine basis, which
//! diagonalises the three-point Dirichlet Laplacian.

mod diagnostics;
mod forcing;
mod ops;
mod stepper;
#[cfg(test)]
mod tests;

pub use diagnostics::{
    diagnostics, read_snapshot, write_diagnostics_csv, write_snapshot, Diagnostics,
    DIAGNOSTICS_HEADER,
};
pub use forcing::{available_modes, forcing_basis, ForcingMode, ForcingSet, Trig};
pub use stepper::{LinearStepper, SpdeStepper, SystemKind};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use ops::SpectralOps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2D {
    #[serde(rename = "L")]
    pub l: f64,
    pub nx: usize,
    pub nz: usize,
}

impl Grid2D {
    pub fn new(l: f64, nx: usize, nz: usize) -> Result<Self> {
        let g = Self { l, nx, nz };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(Error::invalid(format!(
                "grid period must be positive, got {}",
                self.l
            )));
        }
        if self.nx < 8 || !self.nx.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "nx must be even and >= 8, got {}",
                self.nx
            )));
        }
        if self.nz < 8 {
            return Err(Error::invalid(format!("nz must be >= 8, got {}", self.nz)));
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz + 1) as f64
    }

    pub fn dx(&self) -> f64 {
        self.l / self.nx as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn z(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dz()
    }

    /// Wavenumber of Fourier mode `m`.
    pub fn kx(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * m as f64 / self.l
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Highest Fourier mode kept by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.nx / 3
    }

    fn check(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(())
    }
}

/// Grid values `values[i * nz + j]` at `(x_i, z_j)`; zero on the walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ThetaField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.nz {
                values.push(f(grid.x(i), grid.z(j)));
            }
        }
        Self { grid, values }
    }

    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("temperature field".into()));
        }
        Ok(Self { grid, values })
    }

    /// Discrete L2 norm, `(sum theta^2 dx dz)^{1/2}`.
    pub fn norm(&self) -> f64 {
        grid_norm(&self.grid, &self.values)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn dist(&self, other: &ThetaField) -> f64 {
        let d: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        grid_norm(&self.grid, &d)
    }

    pub fn inner(&self, other: &ThetaField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.dx() * self.grid.dz()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    pub grid: Grid2D,
    pub u1: Vec<f64>,
    pub u3: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            u1: vec![0.0; grid.len()],
            u3: vec![0.0; grid.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        (grid_norm(&self.grid, &self.u1).powi(2) + grid_norm(&self.grid, &self.u3).powi(2)).sqrt()
    }

    pub fn dist(&self, other: &VelocityField) -> f64 {
        let d1: Vec<f64> = self.u1.iter().zip(&other.u1).map(|(a, b)| a - b).collect();
        let d3: Vec<f64> = self.u3.iter().zip(&other.u3).map(|(a, b)| a - b).collect();
        (grid_norm(&self.grid, &d1).powi(2) + grid_norm(&self.grid, &d3).powi(2)).sqrt()
    }

    pub fn max_speed(&self) -> f64 {
        self.u1
            .iter()
            .chain(&self.u3)
            .fold(0.0f64, |a, b| a.max(b.abs()))
    }
}

fn grid_norm(grid: &Grid2D, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.dx() * grid.dz()).sqrt()
}

/// Dimensionless parameters of one SPDE run. `lambda_damp` and `n_proj` set
/// the `-lambda P_N` term of the controlled and damped systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeParams {
    pub ra: f64,
    pub ratilde: f64,
    pub eps: f64,
    pub n_forced: usize,
    #[serde(default)]
    pub lambda_damp: f64,
    #[serde(default)]
    pub n_proj: usize,
}

impl SpdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ra >= 0.0)
            || !(self.ratilde >= 0.0)
            || !self.ra.is_finite()
            || !self.ratilde.is_finite()
        {
            return Err(Error::invalid(format!(
                "need Ra >= 0 and Ra~ >= 0, got {} and {}",
                self.ra, self.ratilde
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid(format!(
                "eps must be >= 0, got {}",
                self.eps
            )));
        }
        if !(self.lambda_damp >= 0.0) {
            return Err(Error::invalid("lambda_damp must be >= 0"));
        }
        Ok(())
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

/// Velocity of the steady Stokes problem `-lap u = grad p + Ra k theta`,
/// `div u = 0`, no-slip walls. Per Fourier mode the streamfunction solves the
/// clamped biharmonic problem `(dz^2 - k^2)^2 psi = Ra i k theta`.
pub fn stokes_solve(grid: &Grid2D, theta: &ThetaField, ra: f64) -> Result<VelocityField> {
    grid.check(&theta.grid)?;
    let ops = SpectralOps::get(grid);
    let mut w = ops.work();
    let mut th = ops.zeros();
    ops.to_mixed(&theta.values, &mut th, &mut w);
    let mut psi = ops.zeros();
    ops.stokes_psi(&th, ra, &mut psi);
    Ok(velocity_from_psi(&ops, &psi, &vec![0.0; grid.nz], &mut w))
}

fn velocity_from_psi(
    ops: &SpectralOps,
    psi: &[ops::C64],
    mean: &[f64],
    w: &mut ops::Work,
) -> VelocityField {
    let grid = ops.grid;
    let (mut s1, mut s3) = (ops.zeros(), ops.zeros());
    ops.velocity_spectra(psi, mean, &mut s1, &mut s3);
    let mut out = VelocityField::zeros(grid);
    ops.to_grid2(&s1, &s3, &mut out.u1, &mut out.u3, w);
    out
}

/// Largest stable-looking step for a velocity: Courant number 0.5.
pub fn cfl_dt(u: &VelocityField) -> f64 {
    let v = u.max_speed();
    let h = u.grid.dx().min(u.grid.dz());
    if v == 0.0 {
        f64::INFINITY
    } else {
        0.5 * h / v
    }
}

/// One step of the infinite-Prandtl system; `params.eps` must be 0.
pub fn step_theta_inf(
    params: &SpdeParams,
    theta: &ThetaField,
    forcing: &ForcingSet,
    dw: &[f64],
    dt: f64,
) -> Result<ThetaField> {
    if params.eps != 0.0 {
        return Err(Error::invalid("step_theta_inf needs eps = 0"));
    }
    let mut s = SpdeStepper::limit(params, forcing, theta, dt)?;
    s.step(dw)?;
    Ok(s.theta())
}

/// One step of the eps-system; the velocity solve is implicit in the stiff
/// Stokes part and the temperature is advanced with the new velocity.
pub fn step_boussinesq_eps(
    params: &SpdeParams,
    u: &VelocityField,
    theta: &ThetaField,
    forcing: &ForcingSet,
    dw: &[f64],
    dt: f64,
) -> Result<(VelocityField, ThetaField)> {
    let mut s = SpdeStepper::eps_system(params, forcing, u, theta, dt)?;
    s.step(dw)?;
    Ok((s.velocity(), s.theta()))
}

/// One step of the corrector from time `t` with temperature `theta`, given the
/// initial data `(u0, theta0)`. Returns the corrector velocity and temperature
/// at `t + dt`.
#[allow(clippy::too_many_arguments)]
pub fn step_corrector_spde(
    params: &SpdeParams,
    theta: &ThetaField,
    t: f64,
    u0: &VelocityField,
    theta0: &ThetaField,
    forcing: &ForcingSet,
    dw: &[f64],
    dt: f64,
) -> Result<(VelocityField, ThetaField)> {
    let mut s = SpdeStepper::corrector(params, forcing, u0, theta0, dt)?;
    s.restart_at(theta, t)?;
    s.step(dw)?;
    Ok((s.velocity(), s.theta()))
}

/// One step of the linearisation about `base_theta` (no noise, no control).
pub fn step_linearized(
    params: &SpdeParams,
    base_theta: &ThetaField,
    rho: &ThetaField,
    dt: f64,
) -> Result<ThetaField> {
    let p = SpdeParams {
        lambda_damp: 0.0,
        ..*params
    };
    let mut s = LinearStepper::new(&p, rho, dt)?;
    s.step(base_theta)?;
    Ok(s.rho())
}

/// One step of the controlled linearisation with `-lambda P_N rho_bar`.
/// Returns the new field and the control cost increment `dt |w|^2`,
/// `w = sigma^{-1} lambda P_N rho_bar`.
pub fn step_controlled(
    params: &SpdeParams,
    base_theta: &ThetaField,
    rho_bar: &ThetaField,
    dt: f64,
) -> Result<(ThetaField, f64)> {
    if params.n_proj == 0 {
        return Err(Error::invalid("step_controlled needs n_proj >= 1"));
    }
    let mut s = LinearStepper::new(params, rho_bar, dt)?;
    let cost = s.step(base_theta)?;
    Ok((s.rho(), cost))
}

/// One step of the damped infinite-Prandtl system: `-lambda_damp P_N theta`
/// on the first `n_proj` modes, noise on the forced modes.
pub fn step_damped(
    params: &SpdeParams,
    theta: &ThetaField,
    forcing: &ForcingSet,
    dw: &[f64],
    dt: f64,
) -> Result<ThetaField> {
    if params.eps != 0.0 {
        return Err(Error::invalid("step_damped needs eps = 0"));
    }
    let mut s = SpdeStepper::damped(params, forcing, theta, dt)?;
    s.step(dw)?;
    Ok(s.theta())
}

/// Smallest `lambda_N` admissible for the damped system: `max{2 Ra (Ra~ + 1), 1}`.
pub fn damping_threshold(ra: f64, ratilde: f64) -> f64 {
    (2.0 * ra * (ratilde + 1.0)).max(1.0)
}

/// `(Pr, Ra, Ra~)` from viscosity, diffusivity, gravity, expansion
/// coefficient, imposed gradient, layer depth and bottom temperature.
pub fn dimensionless_from_physical(
    nu: f64,
    kappa: f64,
    g: f64,
    alpha: f64,
    gamma: f64,
    h: f64,
    t1: f64,
) -> Result<(f64, f64, f64)> {
    let all = [nu, kappa, g, alpha, gamma, h, t1];
    if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(
            "physical parameters must all be positive and finite",
        ));
    }
    let pr = nu / kappa;
    let ra = g * alpha * gamma * h.powf(2.5) / (nu * kappa.powf(1.5));
    let ratilde = (kappa * h).sqrt() * t1 / gamma;
    Ok((pr, ra, ratilde))
}

/// Discrete Stokes eigenvalues in ascending order, with multiplicity: each
/// Fourier mode `m >= 1` contributes a cosine and a sine copy.
pub fn stokes_eigenvalues(grid: &Grid2D) -> Result<Vec<f64>> {
    grid.validate()?;
    let ops = SpectralOps::get(grid);
    Ok(ops
        .stokes_spectrum()
        .into_iter()
        .flat_map(|(l, m, _)| std::iter::repeat_n(l, if m == 0 { 1 } else { 2 }))
        .collect())
}

/// `N^eps`: the number of Stokes modes with `eps lambda^2 <= 1`.
pub fn corrector_truncation(grid: &Grid2D, eps: f64) -> Result<usize> {
    Ok(stokes_eigenvalues(grid)?
        .iter()
        .filter(|l| eps * *l * *l <= 1.0)
        .count())
}
