//! Precomputed transforms and per-wavenumber operators for one grid.
//!
//! Layouts: grid values are `values[i * nz + j]` (x index `i`, interior z
//! level `j`). Spectral arrays hold the non-negative Fourier modes
//! `m = 0..=nx/2` as `spec[m * nz + j]`, either at the z levels ("mixed") or
//! as coefficients of the discrete sine basis ("modal", index `n`).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
pub(crate) use rustfft::num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use super::Grid2D;
use crate::{Error, Result};

pub(crate) struct SpectralOps {
    pub grid: Grid2D,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    /// Stored Fourier modes, `nx/2 + 1`.
    pub nm: usize,
    /// Modes `m <= mc` survive the 2/3 rule.
    pub mc: usize,
    /// Orthonormal, symmetric DST-I matrix `S[j * nz + n]`.
    pub dst: Vec<f64>,
    /// Eigenvalues of the discrete `-Laplacian` per `(m, n)`.
    pub lap: Vec<f64>,
    /// `B_m^{-1}` for `1 <= m <= mc` (empty for `m = 0`).
    green: Vec<Vec<f64>>,
    /// Stokes modes per `m <= mc`: columns orthonormal in `dz * M_m`
    /// (`m = 0`: mean flow, `M = I`).
    pub phi: Vec<Vec<f64>>,
    pub stokes_lambda: Vec<Vec<f64>>,
}

pub(crate) struct Work {
    buf: Vec<C64>,
    buf2: Vec<C64>,
    scratch: Vec<C64>,
}

impl SpectralOps {
    pub fn get(grid: &Grid2D) -> Arc<SpectralOps> {
        type Cache = Mutex<HashMap<(u64, usize, usize), Arc<SpectralOps>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = (grid.l.to_bits(), grid.nx, grid.nz);
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(ops) = cache.lock().expect("cache lock").get(&key) {
            return ops.clone();
        }
        let ops = Arc::new(SpectralOps::build(*grid));
        cache
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(ops)
            .clone()
    }

    fn build(grid: Grid2D) -> Self {
        let (nx, nz) = (grid.nx, grid.nz);
        let dz = grid.dz();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nx);
        let inv = planner.plan_fft_inverse(nx);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let nm = nx / 2 + 1;
        let mc = nx / 3;
        let mut dst = vec![0.0; nz * nz];
        let norm = (2.0 * dz).sqrt();
        for j in 0..nz {
            for n in 0..nz {
                dst[j * nz + n] =
                    norm * (((j + 1) * (n + 1)) as f64 * std::f64::consts::PI * dz).sin();
            }
        }
        let mut lap = vec![0.0; nm * nz];
        for m in 0..nm {
            let k2 = grid.kx(m).powi(2);
            for n in 0..nz {
                lap[m * nz + n] = k2
                    + 2.0 / (dz * dz) * (1.0 - ((n + 1) as f64 * std::f64::consts::PI * dz).cos());
            }
        }
        let mut green = vec![Vec::new()];
        let mut phi = Vec::with_capacity(mc + 1);
        let mut stokes_lambda = Vec::with_capacity(mc + 1);
        phi.push(dst.iter().map(|s| s / dz.sqrt()).collect());
        stokes_lambda.push(lap[..nz].to_vec());
        for m in 1..=mc {
            let k2 = grid.kx(m).powi(2);
            let (mm, bb) = stokes_matrices(nz, dz, k2);
            let binv = bb
                .clone()
                .cholesky()
                .expect("biharmonic matrix is SPD")
                .inverse();
            green.push(row_major(&binv));
            // B phi = lambda M phi through M = L L^T.
            let l = mm.clone().cholesky().expect("M is SPD").l();
            let linv = l
                .clone()
                .try_inverse()
                .expect("triangular factor is invertible");
            let mut c = &linv * &bb * linv.transpose();
            c = (&c + c.transpose()) * 0.5;
            let eig = SymmetricEigen::new(c);
            let mut order: Vec<usize> = (0..nz).collect();
            order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
            let vecs = linv.transpose() * &eig.eigenvectors / dz.sqrt();
            let mut p = vec![0.0; nz * nz];
            for (col, &src) in order.iter().enumerate() {
                for j in 0..nz {
                    p[j * nz + col] = vecs[(j, src)];
                }
            }
            phi.push(p);
            stokes_lambda.push(order.iter().map(|&s| eig.eigenvalues[s]).collect());
        }
        Self {
            grid,
            fwd,
            inv,
            scratch_len,
            nm,
            mc,
            dst,
            lap,
            green,
            phi,
            stokes_lambda,
        }
    }

    pub fn work(&self) -> Work {
        let n = self.grid.nx * self.grid.nz;
        Work {
            buf: vec![C64::new(0.0, 0.0); n],
            buf2: vec![C64::new(0.0, 0.0); n],
            scratch: vec![C64::new(0.0, 0.0); self.scratch_len],
        }
    }

    pub fn spec_len(&self) -> usize {
        self.nm * self.grid.nz
    }

    pub fn zeros(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.spec_len()]
    }

    /// Grid values to mixed Fourier coefficients (normalised by `1/nx`).
    pub fn to_mixed(&self, values: &[f64], out: &mut [C64], w: &mut Work) {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        for i in 0..nx {
            for j in 0..nz {
                w.buf[j * nx + i] = C64::new(values[i * nz + j], 0.0);
            }
        }
        self.fwd.process_with_scratch(&mut w.buf, &mut w.scratch);
        let s = 1.0 / nx as f64;
        for m in 0..self.nm {
            for j in 0..nz {
                out[m * nz + j] = w.buf[j * nx + m] * s;
            }
        }
    }

    /// Two real grid arrays at once, packed as real and imaginary parts.
    pub fn to_mixed2(
        &self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [C64],
        out_b: &mut [C64],
        w: &mut Work,
    ) {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        for i in 0..nx {
            for j in 0..nz {
                w.buf[j * nx + i] = C64::new(a[i * nz + j], b[i * nz + j]);
            }
        }
        self.fwd.process_with_scratch(&mut w.buf, &mut w.scratch);
        let s = 0.5 / nx as f64;
        for m in 0..self.nm {
            for j in 0..nz {
                let z = w.buf[j * nx + m];
                let zc = w.buf[j * nx + (nx - m) % nx].conj();
                out_a[m * nz + j] = (z + zc) * s;
                out_b[m * nz + j] = (z - zc) * C64::new(0.0, -1.0) * s;
            }
        }
    }

    fn fill_hermitian(&self, spec: &[C64], buf: &mut [C64]) {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        let half = nx / 2;
        for j in 0..nz {
            let row = &mut buf[j * nx..(j + 1) * nx];
            row.fill(C64::new(0.0, 0.0));
            row[0] = C64::new(spec[j].re, 0.0);
            for m in 1..self.nm {
                let v = spec[m * nz + j];
                if m == half {
                    row[m] = C64::new(v.re, 0.0);
                } else {
                    row[m] = v;
                    row[nx - m] = v.conj();
                }
            }
        }
    }

    /// Mixed coefficients back to grid values.
    pub fn to_grid(&self, spec: &[C64], out: &mut [f64], w: &mut Work) {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        self.fill_hermitian(spec, &mut w.buf);
        self.inv.process_with_scratch(&mut w.buf, &mut w.scratch);
        for i in 0..nx {
            for j in 0..nz {
                out[i * nz + j] = w.buf[j * nx + i].re;
            }
        }
    }

    /// Two spectra back to grid with one complex transform.
    pub fn to_grid2(
        &self,
        a: &[C64],
        b: &[C64],
        out_a: &mut [f64],
        out_b: &mut [f64],
        w: &mut Work,
    ) {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        self.fill_hermitian(a, &mut w.buf);
        self.fill_hermitian(b, &mut w.buf2);
        for (x, y) in w.buf.iter_mut().zip(&w.buf2) {
            *x += C64::new(-y.im, y.re);
        }
        self.inv.process_with_scratch(&mut w.buf, &mut w.scratch);
        for i in 0..nx {
            for j in 0..nz {
                let z = w.buf[j * nx + i];
                out_a[i * nz + j] = z.re;
                out_b[i * nz + j] = z.im;
            }
        }
    }

    /// Mixed to modal: sine transform of each Fourier mode `m <= upto`;
    /// higher modes are zeroed.
    pub fn to_modal(&self, mixed: &[C64], out: &mut [C64], upto: usize) {
        let nz = self.grid.nz;
        for m in 0..self.nm {
            let (src, dst) = (&mixed[m * nz..(m + 1) * nz], &mut out[m * nz..(m + 1) * nz]);
            if m > upto {
                dst.fill(C64::new(0.0, 0.0));
            } else {
                sym_apply(&self.dst, nz, src, dst);
            }
        }
    }

    pub fn to_mixed_from_modal(&self, modal: &[C64], out: &mut [C64]) {
        // The sine matrix is symmetric and orthogonal, so it is its own inverse.
        self.to_modal(modal, out, self.nm);
    }

    pub fn dealias(&self, spec: &mut [C64]) {
        let nz = self.grid.nz;
        spec[(self.mc + 1) * nz..].fill(C64::new(0.0, 0.0));
    }

    /// `i k_m` times each mode (Nyquist mode dropped).
    pub fn ddx(&self, spec: &[C64], out: &mut [C64]) {
        let nz = self.grid.nz;
        for m in 0..self.nm {
            let f = if 2 * m == self.grid.nx {
                0.0
            } else {
                self.grid.kx(m)
            };
            for j in 0..nz {
                out[m * nz + j] = spec[m * nz + j] * C64::new(0.0, f);
            }
        }
    }

    /// Centered z-derivative with zero wall values on a grid array.
    pub fn ddz_grid(&self, values: &[f64], out: &mut [f64]) {
        let nz = self.grid.nz;
        let h = 0.5 / self.grid.dz();
        for (col, o) in values.chunks_exact(nz).zip(out.chunks_exact_mut(nz)) {
            centered(col, o, h);
        }
    }

    pub fn ddz_spec(&self, spec: &[C64], out: &mut [C64]) {
        let nz = self.grid.nz;
        let h = 0.5 / self.grid.dz();
        for (col, o) in spec.chunks_exact(nz).zip(out.chunks_exact_mut(nz)) {
            centered(col, o, h);
        }
    }

    /// Streamfunction of the steady Stokes problem, `B_m psi = Ra i k_m theta_m`
    /// (direct solve). Mean mode and modes above the cutoff are zero.
    pub fn stokes_psi(&self, theta_mixed: &[C64], ra: f64, psi: &mut [C64]) {
        let nz = self.grid.nz;
        psi.fill(C64::new(0.0, 0.0));
        let mut rhs = vec![C64::new(0.0, 0.0); nz];
        for m in 1..=self.mc {
            let ik = C64::new(0.0, ra * self.grid.kx(m));
            for j in 0..nz {
                rhs[j] = theta_mixed[m * nz + j] * ik;
            }
            mat_apply(&self.green[m], nz, &rhs, &mut psi[m * nz..(m + 1) * nz]);
        }
    }

    /// Velocity spectra from streamfunction and mean flow:
    /// `u1 = dz psi` (+ mean), `u3 = -i k psi`.
    pub fn velocity_spectra(&self, psi: &[C64], mean: &[f64], u1: &mut [C64], u3: &mut [C64]) {
        let nz = self.grid.nz;
        self.ddz_spec(psi, u1);
        for m in 0..self.nm {
            let k = self.grid.kx(m);
            for j in 0..nz {
                u3[m * nz + j] = psi[m * nz + j] * C64::new(0.0, -k);
            }
        }
        for j in 0..nz {
            u1[j] = C64::new(mean[j], 0.0);
            u3[j] = C64::new(0.0, 0.0);
        }
    }

    /// Stokes-mode coefficients to streamfunction (`m >= 1`) and mean flow.
    pub fn modal_velocity(&self, coef: &[C64], psi: &mut [C64], mean: &mut [f64]) {
        let nz = self.grid.nz;
        psi.fill(C64::new(0.0, 0.0));
        let mut tmp = vec![C64::new(0.0, 0.0); nz];
        mat_apply(&self.phi[0], nz, &coef[..nz], &mut tmp);
        for j in 0..nz {
            mean[j] = tmp[j].re;
        }
        for m in 1..=self.mc {
            mat_apply(
                &self.phi[m],
                nz,
                &coef[m * nz..(m + 1) * nz],
                &mut psi[m * nz..(m + 1) * nz],
            );
        }
    }

    /// `Phi_m^T dz v` for each `m <= mc`: the load vector of `v` in Stokes-mode
    /// coordinates. For `m >= 1`, `v` is a streamfunction-equation right-hand side.
    pub fn modal_load(&self, v: &[C64], out: &mut [C64]) {
        let nz = self.grid.nz;
        let dz = self.grid.dz();
        out.fill(C64::new(0.0, 0.0));
        for m in 0..=self.mc {
            mat_t_apply(
                &self.phi[m],
                nz,
                &v[m * nz..(m + 1) * nz],
                &mut out[m * nz..(m + 1) * nz],
            );
            for o in &mut out[m * nz..(m + 1) * nz] {
                *o *= dz;
            }
        }
    }

    /// Coefficients of a streamfunction / mean flow in the Stokes basis:
    /// `c = Phi^T (dz M) psi`.
    pub fn project_velocity(&self, psi: &[C64], mean: &[f64], out: &mut [C64]) {
        let nz = self.grid.nz;
        let dz = self.grid.dz();
        out.fill(C64::new(0.0, 0.0));
        let mean_c: Vec<C64> = mean.iter().map(|x| C64::new(*x, 0.0)).collect();
        mat_t_apply(&self.phi[0], nz, &mean_c, &mut out[..nz]);
        for o in &mut out[..nz] {
            *o *= dz;
        }
        let mut mpsi = vec![C64::new(0.0, 0.0); nz];
        let inv_dz2 = 1.0 / (dz * dz);
        for m in 1..=self.mc {
            let k2 = self.grid.kx(m).powi(2);
            let p = &psi[m * nz..(m + 1) * nz];
            for j in 0..nz {
                let lo = if j > 0 { p[j - 1] } else { C64::new(0.0, 0.0) };
                let hi = if j + 1 < nz {
                    p[j + 1]
                } else {
                    C64::new(0.0, 0.0)
                };
                mpsi[j] = (p[j] * 2.0 - lo - hi) * inv_dz2 + p[j] * k2;
            }
            mat_t_apply(&self.phi[m], nz, &mpsi, &mut out[m * nz..(m + 1) * nz]);
            for o in &mut out[m * nz..(m + 1) * nz] {
                *o *= dz;
            }
        }
    }

    /// Weight of Fourier mode `m` in Parseval sums over a real field.
    pub fn weight(&self, m: usize) -> f64 {
        if m == 0 || 2 * m == self.grid.nx {
            1.0
        } else {
            2.0
        }
    }

    /// Stokes eigenvalues as `(lambda, m, n)` sorted ascending; each `m >= 1`
    /// entry stands for two real modes (cosine and sine).
    pub fn stokes_spectrum(&self) -> Vec<(f64, usize, usize)> {
        let mut out: Vec<(f64, usize, usize)> = self
            .stokes_lambda
            .iter()
            .enumerate()
            .flat_map(|(m, ls)| ls.iter().enumerate().map(move |(n, l)| (*l, m, n)))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        out
    }

    pub fn check_cfl(&self, u1: &[f64], u3: &[f64], dt: f64) -> Result<()> {
        let vmax = u1.iter().chain(u3).fold(0.0f64, |a, b| a.max(b.abs()));
        if !vmax.is_finite() {
            return Err(Error::NonFinite("velocity field".into()));
        }
        let courant = vmax * dt / self.grid.dx().min(self.grid.dz());
        if courant > 1.0 {
            return Err(Error::Cfl { courant, dt });
        }
        Ok(())
    }
}

/// Mass matrix `-D2 + k^2` and clamped biharmonic `(D2 - k^2)^2 + 2/dz^4 (corners)`.
pub(crate) fn stokes_matrices(nz: usize, dz: f64, k2: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut d2 = DMatrix::zeros(nz, nz);
    let h2 = 1.0 / (dz * dz);
    for j in 0..nz {
        d2[(j, j)] = -2.0 * h2;
        if j > 0 {
            d2[(j, j - 1)] = h2;
        }
        if j + 1 < nz {
            d2[(j, j + 1)] = h2;
        }
    }
    let id = DMatrix::<f64>::identity(nz, nz);
    let mm = -&d2 + &id * k2;
    let shifted = &d2 - &id * k2;
    let mut bb = &shifted * &shifted;
    bb[(0, 0)] += 2.0 * h2 * h2;
    bb[(nz - 1, nz - 1)] += 2.0 * h2 * h2;
    (mm, bb)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn centered<T>(col: &[T], out: &mut [T], h: f64)
where
    T: Copy + Default + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = col.len();
    for j in 0..n {
        let lo = if j > 0 { col[j - 1] } else { T::default() };
        let hi = if j + 1 < n { col[j + 1] } else { T::default() };
        out[j] = (hi - lo) * h;
    }
}

/// `out = A v` for row-major real `n x n` `A` and complex `v`.
pub(crate) fn mat_apply(a: &[f64], n: usize, v: &[C64], out: &mut [C64]) {
    for (o, row) in out.iter_mut().zip(a.chunks_exact(n)) {
        let (mut re, mut im) = (0.0, 0.0);
        for (x, y) in row.iter().zip(v) {
            re += x * y.re;
            im += x * y.im;
        }
        *o = C64::new(re, im);
    }
}

/// `out = A^T v`.
pub(crate) fn mat_t_apply(a: &[f64], n: usize, v: &[C64], out: &mut [C64]) {
    out.fill(C64::new(0.0, 0.0));
    for (row, x) in a.chunks_exact(n).zip(v) {
        for (o, y) in out.iter_mut().zip(row) {
            *o += *x * *y;
        }
    }
}

fn sym_apply(a: &[f64], n: usize, v: &[C64], out: &mut [C64]) {
    mat_apply(a, n, v, out)
}
