use std::sync::Arc;

use super::forcing::forcing_basis;
use super::ops::{SpectralOps, Work, C64};
use super::{ForcingSet, Grid2D, SpdeParams, ThetaField, VelocityField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Infinite-Prandtl limit.
    Limit,
    /// Limit plus `-lambda_damp P_N theta`.
    Damped,
    /// Finite Prandtl number, `eps > 0`.
    Eps,
    /// Limit temperature advected by the corrector velocity.
    Corrector,
}

const NG: usize = 6;
const NS: usize = 7;

struct Scratch {
    w: Work,
    g: [Vec<f64>; NG],
    s: [Vec<C64>; NS],
    u1: Vec<f64>,
    u3: Vec<f64>,
    th_g: Vec<f64>,
}

impl Scratch {
    fn new(ops: &SpectralOps) -> Self {
        let n = ops.grid.len();
        Self {
            w: ops.work(),
            g: std::array::from_fn(|_| vec![0.0; n]),
            s: std::array::from_fn(|_| ops.zeros()),
            u1: vec![0.0; n],
            u3: vec![0.0; n],
            th_g: vec![0.0; n],
        }
    }
}

/// Skew advection `(u.grad f + div(u f)) / 2` of `f` (mixed spectrum `f_mx`,
/// grid values `f_g`), dealiased, written to `out` (mixed).
#[allow(clippy::too_many_arguments)]
fn advect(
    ops: &SpectralOps,
    w: &mut Work,
    u1: &[f64],
    u3: &[f64],
    f_mx: &[C64],
    f_g: &[f64],
    out: &mut [C64],
    t1: &mut [C64],
    ga: &mut [f64],
    gb: &mut [f64],
    gc: &mut [f64],
) {
    ops.ddx(f_mx, t1);
    ops.to_grid(t1, ga, w);
    ops.ddz_grid(f_g, gb);
    for i in 0..ga.len() {
        ga[i] = u1[i] * ga[i] + u3[i] * gb[i];
        gc[i] = u3[i] * f_g[i];
    }
    ops.ddz_grid(gc, gb);
    for i in 0..ga.len() {
        ga[i] += gb[i];
        gc[i] = u1[i] * f_g[i];
    }
    ops.to_mixed2(ga, gc, out, t1, w);
    let nz = ops.grid.nz;
    for m in 0..ops.nm {
        let ik = C64::new(
            0.0,
            if 2 * m == ops.grid.nx {
                0.0
            } else {
                ops.grid.kx(m)
            },
        );
        for j in 0..nz {
            let k = m * nz + j;
            out[k] = (out[k] + t1[k] * ik) * 0.5;
        }
    }
    ops.dealias(out);
}

/// Implicit temperature update in the modal basis:
/// `theta+ = (theta - dt N + dt Ra~ u3 + sigma dW) / (1 + dt (mu + lambda 1_{P_N}))`.
struct ThetaUpdate {
    dt: f64,
    ratilde: f64,
    den_re: Vec<f64>,
    den_im: Vec<f64>,
    noise: Vec<(usize, bool, f64)>,
}

impl ThetaUpdate {
    fn new(
        ops: &SpectralOps,
        dt: f64,
        ratilde: f64,
        forcing: Option<&ForcingSet>,
        damping: Option<(&ForcingSet, f64)>,
    ) -> Self {
        let len = (ops.mc + 1) * ops.grid.nz;
        let mut den_re: Vec<f64> = ops.lap[..len].iter().map(|mu| 1.0 + dt * mu).collect();
        let mut den_im = den_re.clone();
        if let Some((basis, lambda)) = damping {
            for mode in &basis.labels {
                let (idx, im, _) = mode.modal_entry(&ops.grid);
                if im {
                    den_im[idx] += dt * lambda;
                } else {
                    den_re[idx] += dt * lambda;
                }
            }
        }
        let noise = forcing
            .map(|f| f.labels.iter().map(|m| m.modal_entry(&ops.grid)).collect())
            .unwrap_or_default();
        Self {
            dt,
            ratilde,
            den_re,
            den_im,
            noise,
        }
    }

    fn apply(&self, theta: &mut [C64], n_modal: &[C64], u3_modal: &[C64], dw: Option<&[f64]>) {
        let len = self.den_re.len();
        for k in 0..len {
            theta[k] += (u3_modal[k] * self.ratilde - n_modal[k]) * self.dt;
        }
        if let Some(dw) = dw {
            for (&(idx, im, amp), d) in self.noise.iter().zip(dw) {
                if im {
                    theta[idx].im += amp * d;
                } else {
                    theta[idx].re += amp * d;
                }
            }
        }
        for k in 0..len {
            theta[k] = C64::new(theta[k].re / self.den_re[k], theta[k].im / self.den_im[k]);
        }
        theta[len..].fill(C64::new(0.0, 0.0));
    }
}

fn phi1(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

fn modal_from_theta(ops: &SpectralOps, theta: &ThetaField, sc: &mut Scratch) -> Result<Vec<C64>> {
    ops.grid.check(&theta.grid)?;
    if theta.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("temperature field".into()));
    }
    let mut mixed = ops.zeros();
    ops.to_mixed(&theta.values, &mut mixed, &mut sc.w);
    let mut modal = ops.zeros();
    ops.to_modal(&mixed, &mut modal, ops.mc);
    Ok(modal)
}

fn theta_from_modal(ops: &SpectralOps, modal: &[C64], sc: &mut Scratch) -> ThetaField {
    let mut mixed = ops.zeros();
    ops.to_mixed_from_modal(modal, &mut mixed);
    let mut out = ThetaField::zeros(ops.grid);
    ops.to_grid(&mixed, &mut out.values, &mut sc.w);
    out
}

/// Stokes-mode coefficients of a velocity field (modes above the cutoff dropped).
fn velocity_coefficients(
    ops: &SpectralOps,
    u: &VelocityField,
    sc: &mut Scratch,
) -> Result<Vec<C64>> {
    ops.grid.check(&u.grid)?;
    let nz = ops.grid.nz;
    let (mut s1, mut s3) = (ops.zeros(), ops.zeros());
    ops.to_mixed2(&u.u1, &u.u3, &mut s1, &mut s3, &mut sc.w);
    let mut psi = ops.zeros();
    for m in 1..=ops.mc {
        let k = ops.grid.kx(m);
        for j in 0..nz {
            psi[m * nz + j] = s3[m * nz + j] * C64::new(0.0, 1.0 / k);
        }
    }
    let mean: Vec<f64> = s1[..nz].iter().map(|c| c.re).collect();
    let mut coef = ops.zeros();
    ops.project_velocity(&psi, &mean, &mut coef);
    Ok(coef)
}

/// Stokes-mode coefficients of the steady Stokes velocity of `theta_mixed`.
fn stokes_coefficients(ops: &SpectralOps, theta_mixed: &[C64], ra: f64) -> Vec<C64> {
    let nz = ops.grid.nz;
    let mut rhs = ops.zeros();
    for m in 1..=ops.mc {
        let ik = C64::new(0.0, ra * ops.grid.kx(m));
        for j in 0..nz {
            rhs[m * nz + j] = theta_mixed[m * nz + j] * ik;
        }
    }
    let mut load = ops.zeros();
    ops.modal_load(&rhs, &mut load);
    for m in 1..=ops.mc {
        for n in 0..nz {
            load[m * nz + n] /= ops.stokes_lambda[m][n];
        }
    }
    load[..nz].fill(C64::new(0.0, 0.0));
    load
}

/// Time stepper for one temperature trajectory of the limit, damped, eps or
/// corrector system. State is kept spectrally; grid fields are produced on
/// request.
pub struct SpdeStepper {
    ops: Arc<SpectralOps>,
    params: SpdeParams,
    kind: SystemKind,
    dt: f64,
    t: f64,
    n_noise: usize,
    theta: Vec<C64>,
    /// Eps: Stokes coefficients of `u`. Corrector: of `w(t)`.
    vel: Vec<C64>,
    w0: Vec<C64>,
    /// Eps: `1 + lambda dt / eps`. Corrector: `exp(-lambda dt / eps)`.
    factor: Vec<f64>,
    /// Corrector: `phi1(lambda dt / eps)`.
    average: Vec<f64>,
    update: ThetaUpdate,
    sc: Scratch,
}

impl SpdeStepper {
    fn base(
        params: &SpdeParams,
        forcing: &ForcingSet,
        theta0: &ThetaField,
        dt: f64,
        kind: SystemKind,
    ) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        theta0.grid.check(&forcing.grid)?;
        let ops = SpectralOps::get(&theta0.grid);
        let mut sc = Scratch::new(&ops);
        let theta = modal_from_theta(&ops, theta0, &mut sc)?;
        let damping_basis;
        let damping = if kind == SystemKind::Damped && params.n_proj > 0 && params.lambda_damp > 0.0
        {
            damping_basis = forcing_basis(&theta0.grid, params.n_proj)?;
            Some((&damping_basis, params.lambda_damp))
        } else {
            None
        };
        let update = ThetaUpdate::new(&ops, dt, params.ratilde, Some(forcing), damping);
        Ok(Self {
            params: *params,
            kind,
            dt,
            t: 0.0,
            n_noise: forcing.n(),
            theta,
            vel: Vec::new(),
            w0: Vec::new(),
            factor: Vec::new(),
            average: Vec::new(),
            update,
            sc,
            ops,
        })
    }

    pub fn limit(
        params: &SpdeParams,
        forcing: &ForcingSet,
        theta0: &ThetaField,
        dt: f64,
    ) -> Result<Self> {
        Self::base(params, forcing, theta0, dt, SystemKind::Limit)
    }

    pub fn damped(
        params: &SpdeParams,
        forcing: &ForcingSet,
        theta0: &ThetaField,
        dt: f64,
    ) -> Result<Self> {
        Self::base(params, forcing, theta0, dt, SystemKind::Damped)
    }

    pub fn eps_system(
        params: &SpdeParams,
        forcing: &ForcingSet,
        u0: &VelocityField,
        theta0: &ThetaField,
        dt: f64,
    ) -> Result<Self> {
        if !(params.eps > 0.0) {
            return Err(Error::invalid("the eps-system needs eps > 0"));
        }
        let mut s = Self::base(params, forcing, theta0, dt, SystemKind::Eps)?;
        s.vel = velocity_coefficients(&s.ops, u0, &mut s.sc)?;
        s.factor = s
            .lambdas()
            .iter()
            .map(|l| 1.0 + l * dt / params.eps)
            .collect();
        Ok(s)
    }

    pub fn corrector(
        params: &SpdeParams,
        forcing: &ForcingSet,
        u0: &VelocityField,
        theta0: &ThetaField,
        dt: f64,
    ) -> Result<Self> {
        if !(params.eps > 0.0) {
            return Err(Error::invalid("the corrector needs eps > 0"));
        }
        let mut s = Self::base(params, forcing, theta0, dt, SystemKind::Corrector)?;
        let eps = params.eps;
        let lambdas = s.lambdas();
        let mut coef = velocity_coefficients(&s.ops, u0, &mut s.sc)?;
        for (c, l) in coef.iter_mut().zip(&lambdas) {
            if eps * l * l > 1.0 {
                *c = C64::new(0.0, 0.0);
            }
        }
        let mut mixed = s.ops.zeros();
        s.ops.to_mixed(&theta0.values, &mut mixed, &mut s.sc.w);
        let slaved = stokes_coefficients(&s.ops, &mixed, params.ra);
        s.w0 = coef.iter().zip(&slaved).map(|(a, b)| a - b).collect();
        s.vel = s.w0.clone();
        s.factor = lambdas.iter().map(|l| (-l * dt / eps).exp()).collect();
        s.average = lambdas.iter().map(|l| phi1(l * dt / eps)).collect();
        Ok(s)
    }

    /// Corrector only: continue from temperature `theta` at time `t`, with
    /// the transient `w(t) = exp(-A t / eps) w(0)`.
    pub fn restart_at(&mut self, theta: &ThetaField, t: f64) -> Result<()> {
        if self.kind != SystemKind::Corrector || t < 0.0 {
            return Err(Error::invalid(
                "restart_at applies to the corrector with t >= 0",
            ));
        }
        self.theta = modal_from_theta(&self.ops, theta, &mut self.sc)?;
        let lambdas = self.lambdas();
        for ((v, w0), l) in self.vel.iter_mut().zip(&self.w0).zip(&lambdas) {
            *v = *w0 * (-l * t / self.params.eps).exp();
        }
        self.t = t;
        Ok(())
    }

    /// Stokes eigenvalue for each modal slot (`inf` above the cutoff).
    fn lambdas(&self) -> Vec<f64> {
        let nz = self.ops.grid.nz;
        let mut out = vec![f64::INFINITY; self.ops.spec_len()];
        for (m, ls) in self.ops.stokes_lambda.iter().enumerate() {
            out[m * nz..(m + 1) * nz].copy_from_slice(ls);
        }
        out
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Grid2D {
        self.ops.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.n_noise
    }

    pub fn params(&self) -> &SpdeParams {
        &self.params
    }

    pub fn theta(&mut self) -> ThetaField {
        theta_from_modal(&self.ops, &self.theta, &mut self.sc)
    }

    /// `||theta||` by Parseval on the spectral state.
    pub fn theta_norm(&self) -> f64 {
        modal_norm(&self.ops, &self.theta)
    }

    pub(crate) fn theta_modal(&self) -> &[C64] {
        &self.theta
    }

    /// Velocity at the current time.
    pub fn velocity(&mut self) -> VelocityField {
        let ops = self.ops.clone();
        let grid = ops.grid;
        let nz = grid.nz;
        let mut psi = ops.zeros();
        let mut mean = vec![0.0; nz];
        match self.kind {
            SystemKind::Eps => ops.modal_velocity(&self.vel, &mut psi, &mut mean),
            _ => {
                let mut mixed = ops.zeros();
                ops.to_mixed_from_modal(&self.theta, &mut mixed);
                ops.stokes_psi(&mixed, self.params.ra, &mut psi);
                if self.kind == SystemKind::Corrector {
                    let mut psi_w = ops.zeros();
                    ops.modal_velocity(&self.vel, &mut psi_w, &mut mean);
                    for (a, b) in psi.iter_mut().zip(&psi_w) {
                        *a += b;
                    }
                }
            }
        }
        super::velocity_from_psi(&ops, &psi, &mean, &mut self.sc.w)
    }

    /// Corrector only: `(||w||^2, ||grad w||^2)` in the discrete energy norms.
    pub fn transient_energy(&self) -> Option<(f64, f64)> {
        if self.kind != SystemKind::Corrector {
            return None;
        }
        let lambdas = self.lambdas();
        let (mut e, mut g) = (0.0, 0.0);
        let nz = self.ops.grid.nz;
        for m in 0..=self.ops.mc {
            let wm = self.ops.weight(m) * self.ops.grid.l;
            for n in 0..nz {
                let c2 = self.vel[m * nz + n].norm_sqr();
                e += wm * c2;
                g += wm * c2 * lambdas[m * nz + n];
            }
        }
        Some((e, g))
    }

    pub fn step(&mut self, dw: &[f64]) -> Result<()> {
        if dw.len() != self.n_noise {
            return Err(Error::DimensionMismatch {
                expected: self.n_noise,
                found: dw.len(),
            });
        }
        let ops = self.ops.clone();
        let nz = ops.grid.nz;
        let Scratch {
            w,
            g,
            s,
            u1,
            u3,
            th_g,
        } = &mut self.sc;
        let [ga, gb, gc, gd, _, _] = g;
        let [th_mx, psi, s1, s3, nl, t1, t2] = s;
        let mut mean = vec![0.0; nz];
        ops.to_mixed_from_modal(&self.theta, th_mx);
        match self.kind {
            SystemKind::Limit | SystemKind::Damped => {
                ops.stokes_psi(th_mx, self.params.ra, psi);
            }
            SystemKind::Corrector => {
                ops.stokes_psi(th_mx, self.params.ra, psi);
                for ((t, v), a) in t1.iter_mut().zip(&self.vel).zip(&self.average) {
                    *t = *v * *a;
                }
                ops.modal_velocity(t1, t2, &mut mean);
                for (a, b) in psi.iter_mut().zip(t2.iter()) {
                    *a += b;
                }
            }
            SystemKind::Eps => {
                let eps = self.params.eps;
                let dt = self.dt;
                ops.modal_velocity(&self.vel, psi, &mut mean);
                ops.velocity_spectra(psi, &mean, s1, s3);
                ops.to_grid2(s1, s3, u1, u3, w);
                ops.ddx(s1, t1);
                ops.ddx(s3, t2);
                ops.to_grid2(t1, t2, ga, gb, w);
                ops.ddz_grid(u1, gc);
                ops.ddz_grid(u3, gd);
                for i in 0..ga.len() {
                    let n1 = u1[i] * ga[i] + u3[i] * gc[i];
                    let n3 = u1[i] * gb[i] + u3[i] * gd[i];
                    ga[i] = n1;
                    gb[i] = n3;
                }
                ops.to_mixed2(ga, gb, t1, t2, w);
                ops.dealias(t1);
                ops.dealias(t2);
                ops.ddz_spec(t1, nl);
                for j in 0..nz {
                    nl[j] = C64::new(-dt * t1[j].re, 0.0);
                }
                for m in 1..=ops.mc {
                    let k = ops.grid.kx(m);
                    let forcing = C64::new(0.0, dt / eps * self.params.ra * k);
                    for j in 0..nz {
                        let idx = m * nz + j;
                        nl[idx] =
                            (nl[idx] - t2[idx] * C64::new(0.0, k)) * dt + th_mx[idx] * forcing;
                    }
                }
                nl[(ops.mc + 1) * nz..].fill(C64::new(0.0, 0.0));
                ops.modal_load(nl, t1);
                for ((v, l), f) in self.vel.iter_mut().zip(t1.iter()).zip(&self.factor) {
                    *v = (*v + l) / f;
                }
                ops.modal_velocity(&self.vel, psi, &mut mean);
            }
        }
        ops.velocity_spectra(psi, &mean, s1, s3);
        ops.to_grid2(s1, s3, u1, u3, w);
        ops.check_cfl(u1, u3, self.dt)?;
        ops.to_grid(th_mx, th_g, w);
        advect(&ops, w, u1, u3, th_mx, th_g, nl, t1, ga, gb, gc);
        ops.to_modal(nl, t1, ops.mc);
        ops.to_modal(s3, t2, ops.mc);
        self.update.apply(&mut self.theta, t1, t2, Some(dw));
        if self.kind == SystemKind::Corrector {
            for (v, f) in self.vel.iter_mut().zip(&self.factor) {
                *v *= *f;
            }
        }
        self.t += self.dt;
        if self
            .theta
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite(format!("temperature at t = {}", self.t)));
        }
        Ok(())
    }
}

fn modal_norm(ops: &SpectralOps, modal: &[C64]) -> f64 {
    let nz = ops.grid.nz;
    let mut s = 0.0;
    for m in 0..ops.nm {
        let wm = ops.weight(m);
        s += wm
            * modal[m * nz..(m + 1) * nz]
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>();
    }
    (s * ops.grid.l * ops.grid.dz()).sqrt()
}

/// Linearisation about a base temperature, optionally with the feedback
/// `-lambda P_N rho` on the first `n_proj` Laplacian modes.
pub struct LinearStepper {
    ops: Arc<SpectralOps>,
    params: SpdeParams,
    dt: f64,
    rho: Vec<C64>,
    update: ThetaUpdate,
    control: Vec<(usize, bool, f64)>,
    sc: Scratch,
    base: Vec<C64>,
}

impl LinearStepper {
    pub fn new(params: &SpdeParams, rho0: &ThetaField, dt: f64) -> Result<Self> {
        params.validate()?;
        if params.eps != 0.0 {
            return Err(Error::invalid(
                "the linearised system is taken about the eps = 0 limit",
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let ops = SpectralOps::get(&rho0.grid);
        let mut sc = Scratch::new(&ops);
        let rho = modal_from_theta(&ops, rho0, &mut sc)?;
        let (update, control) = if params.lambda_damp > 0.0 && params.n_proj > 0 {
            let basis = forcing_basis(&rho0.grid, params.n_proj)?;
            let control = basis
                .labels
                .iter()
                .map(|m| m.modal_entry(&rho0.grid))
                .collect();
            (
                ThetaUpdate::new(
                    &ops,
                    dt,
                    params.ratilde,
                    None,
                    Some((&basis, params.lambda_damp)),
                ),
                control,
            )
        } else {
            (
                ThetaUpdate::new(&ops, dt, params.ratilde, None, None),
                Vec::new(),
            )
        };
        Ok(Self {
            base: ops.zeros(),
            ops,
            params: *params,
            dt,
            rho,
            update,
            control,
            sc,
        })
    }

    pub fn rho(&mut self) -> ThetaField {
        theta_from_modal(&self.ops, &self.rho, &mut self.sc)
    }

    pub fn rho_norm(&self) -> f64 {
        modal_norm(&self.ops, &self.rho)
    }

    /// Advance about the base field; returns the control cost increment.
    pub fn step(&mut self, base: &ThetaField) -> Result<f64> {
        self.base = modal_from_theta(&self.ops, base, &mut self.sc)?;
        self.advance()
    }

    /// Advance about the current state of a limit (or damped) stepper.
    pub fn step_on(&mut self, base: &SpdeStepper) -> Result<f64> {
        if base.grid() != self.ops.grid {
            return Err(Error::invalid("base trajectory lives on a different grid"));
        }
        self.base.copy_from_slice(base.theta_modal());
        self.advance()
    }

    fn advance(&mut self) -> Result<f64> {
        let ops = self.ops.clone();
        let ra = self.params.ra;
        let Scratch {
            w,
            g,
            s,
            u1,
            u3,
            th_g,
        } = &mut self.sc;
        let [ga, gb, gc, rho_g, v1, v3] = g;
        let [th_mx, psi, s1, s3, nl, t1, t2] = s;
        let zero_mean = vec![0.0; ops.grid.nz];
        // Base velocity and temperature.
        ops.to_mixed_from_modal(&self.base, th_mx);
        ops.to_grid(th_mx, th_g, w);
        ops.stokes_psi(th_mx, ra, psi);
        ops.velocity_spectra(psi, &zero_mean, s1, s3);
        ops.to_grid2(s1, s3, u1, u3, w);
        ops.check_cfl(u1, u3, self.dt)?;
        // Perturbation velocity.
        ops.to_mixed_from_modal(&self.rho, t2);
        ops.to_grid(t2, rho_g, w);
        ops.stokes_psi(t2, ra, psi);
        ops.velocity_spectra(psi, &zero_mean, s1, s3);
        ops.to_grid2(s1, s3, v1, v3, w);
        advect(&ops, w, u1, u3, t2, rho_g, nl, t1, ga, gb, gc);
        advect(&ops, w, v1, v3, th_mx, th_g, s1, t1, ga, gb, gc);
        for (a, b) in nl.iter_mut().zip(s1.iter()) {
            *a += b;
        }
        ops.to_modal(nl, t1, ops.mc);
        ops.to_modal(s3, t2, ops.mc);
        self.update.apply(&mut self.rho, t1, t2, None);
        if self
            .rho
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite("linearised temperature".into()));
        }
        let lambda = self.params.lambda_damp;
        let cost: f64 = self
            .control
            .iter()
            .map(|&(idx, im, amp)| {
                let c = if im {
                    self.rho[idx].im
                } else {
                    self.rho[idx].re
                };
                (lambda * c / amp).powi(2)
            })
            .sum();
        Ok(cost * self.dt)
    }
}
