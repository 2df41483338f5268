use serde::{Deserialize, Serialize};

use super::{Grid2D, ThetaField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// `trig(2 pi m x / L) sin(j pi z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingMode {
    pub m: usize,
    pub j: usize,
    pub trig: Trig,
    /// Continuum Laplacian eigenvalue `(2 pi m / L)^2 + (j pi)^2`.
    pub eigenvalue: f64,
    /// Grid amplitude, so that the mode has discrete norm `1/sqrt(N)`.
    pub amplitude: f64,
}

impl ForcingMode {
    /// Position in the modal (Fourier x sine) layout and the value stored
    /// there; the second flag marks the imaginary part.
    pub(crate) fn modal_entry(&self, grid: &Grid2D) -> (usize, bool, f64) {
        let base = self.amplitude / (2.0 * grid.dz()).sqrt();
        let idx = self.m * grid.nz + (self.j - 1);
        match (self.m, self.trig) {
            (0, _) => (idx, false, base),
            (_, Trig::Cos) => (idx, false, 0.5 * base),
            (_, Trig::Sin) => (idx, true, -0.5 * base),
        }
    }

    /// Discrete eigenvalue of the three-point Laplacian for this mode.
    pub fn discrete_eigenvalue(&self, grid: &Grid2D) -> f64 {
        let dz = grid.dz();
        grid.kx(self.m).powi(2)
            + 2.0 / (dz * dz) * (1.0 - (self.j as f64 * std::f64::consts::PI * dz).cos())
    }

    pub fn field(&self, grid: &Grid2D) -> ThetaField {
        let k = grid.kx(self.m);
        let j = self.j as f64 * std::f64::consts::PI;
        let a = self.amplitude;
        match self.trig {
            Trig::Cos => ThetaField::from_fn(*grid, |x, z| a * (k * x).cos() * (j * z).sin()),
            Trig::Sin => ThetaField::from_fn(*grid, |x, z| a * (k * x).sin() * (j * z).sin()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSet {
    pub grid: Grid2D,
    pub labels: Vec<ForcingMode>,
    pub modes: Vec<ThetaField>,
    pub eigenvalues: Vec<f64>,
    /// Squared norm of each mode, `1/N`.
    pub normalization: f64,
}

impl ForcingSet {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sigma_sq(&self) -> f64 {
        self.modes.iter().map(|m| m.norm().powi(2)).sum()
    }
}

/// Number of forcing modes representable on the dealiased grid.
pub fn available_modes(grid: &Grid2D) -> usize {
    let mc = grid.dealias_cutoff();
    grid.nz * (1 + 2 * mc)
}

/// First `n` Laplacian eigenfunctions in order of eigenvalue (ties by `m`,
/// then `j`, cosine before sine), each scaled to squared norm `1/n`.
pub fn forcing_basis(grid: &Grid2D, n: usize) -> Result<ForcingSet> {
    grid.validate()?;
    let avail = available_modes(grid);
    if n == 0 || n > avail {
        return Err(Error::invalid(format!(
            "forcing basis size must be in 1..={avail} on this grid, got {n}"
        )));
    }
    let mut all = Vec::with_capacity(avail);
    for m in 0..=grid.dealias_cutoff() {
        for j in 1..=grid.nz {
            let eigenvalue = grid.kx(m).powi(2) + (j as f64 * std::f64::consts::PI).powi(2);
            let trigs: &[Trig] = if m == 0 {
                &[Trig::Cos]
            } else {
                &[Trig::Cos, Trig::Sin]
            };
            for &trig in trigs {
                all.push(ForcingMode {
                    m,
                    j,
                    trig,
                    eigenvalue,
                    amplitude: 0.0,
                });
            }
        }
    }
    all.sort_by(|a, b| {
        a.eigenvalue
            .total_cmp(&b.eigenvalue)
            .then(a.m.cmp(&b.m))
            .then(a.j.cmp(&b.j))
            .then((a.trig as u8).cmp(&(b.trig as u8)))
    });
    all.truncate(n);
    let normalization = 1.0 / n as f64;
    for mode in &mut all {
        // sum_i trig^2 dx = L (m = 0) or L/2; sum_j sin^2 dz = 1/2.
        let x_factor = if mode.m == 0 { grid.l } else { 0.5 * grid.l };
        mode.amplitude = (normalization / (0.5 * x_factor)).sqrt();
    }
    Ok(ForcingSet {
        grid: *grid,
        modes: all.iter().map(|m| m.field(grid)).collect(),
        eigenvalues: all.iter().map(|m| m.eigenvalue).collect(),
        labels: all,
        normalization,
    })
}
