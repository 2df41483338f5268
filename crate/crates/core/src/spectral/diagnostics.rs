use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::ops::SpectralOps;
use super::{Grid2D, ThetaField, VelocityField};
use crate::{Error, Result};

pub const DIAGNOSTICS_HEADER: &str = "t,l2_theta,l3_theta,grad_theta,l2_u,grad_u,div_resid";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub l2_theta: f64,
    pub l3_theta: f64,
    pub lp_theta: f64,
    pub p: f64,
    pub grad_theta: f64,
    pub l2_u: f64,
    pub grad_u: f64,
    /// `||dx u1 + dz u3|| / ||u||` (0 for a zero field).
    pub div_resid: f64,
}

fn lp(grid: &Grid2D, v: &[f64], p: f64) -> f64 {
    let s: f64 = v.iter().map(|x| x.abs().powf(p)).sum();
    (s * grid.dx() * grid.dz()).powf(1.0 / p)
}

/// `||grad f||^2` with the spectral x-derivative and one-sided z-differences
/// across every cell, walls included; this is the quadratic form of the
/// discrete Laplacian.
fn grad_sq(ops: &SpectralOps, f: &[f64]) -> f64 {
    let grid = ops.grid;
    let nz = grid.nz;
    let mut w = ops.work();
    let mut spec = ops.zeros();
    ops.to_mixed(f, &mut spec, &mut w);
    let mut dx = ops.zeros();
    ops.ddx(&spec, &mut dx);
    let mut gx = vec![0.0; grid.len()];
    ops.to_grid(&dx, &mut gx, &mut w);
    let sx: f64 = gx.iter().map(|x| x * x).sum();
    let mut sz = 0.0;
    for col in f.chunks_exact(nz) {
        let mut prev = 0.0;
        for v in col.iter().chain(std::iter::once(&0.0)) {
            sz += ((v - prev) / grid.dz()).powi(2);
            prev = *v;
        }
    }
    (sx + sz) * grid.dx() * grid.dz()
}

pub fn diagnostics(theta: &ThetaField, u: &VelocityField, p: f64) -> Result<Diagnostics> {
    theta.grid.check(&u.grid)?;
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("Lp exponent must be >= 1, got {p}")));
    }
    let grid = theta.grid;
    let ops = SpectralOps::get(&grid);
    let l2_u = u.norm();
    let mut w = ops.work();
    let (mut s1, mut s3) = (ops.zeros(), ops.zeros());
    ops.to_mixed2(&u.u1, &u.u3, &mut s1, &mut s3, &mut w);
    let mut d1 = ops.zeros();
    ops.ddx(&s1, &mut d1);
    let mut g1 = vec![0.0; grid.len()];
    ops.to_grid(&d1, &mut g1, &mut w);
    let mut g3 = vec![0.0; grid.len()];
    ops.ddz_grid(&u.u3, &mut g3);
    let div: Vec<f64> = g1.iter().zip(&g3).map(|(a, b)| a + b).collect();
    let div_norm = lp(&grid, &div, 2.0);
    Ok(Diagnostics {
        l2_theta: theta.norm(),
        l3_theta: lp(&grid, &theta.values, 3.0),
        lp_theta: lp(&grid, &theta.values, p),
        p,
        grad_theta: grad_sq(&ops, &theta.values).sqrt(),
        l2_u,
        grad_u: (grad_sq(&ops, &u.u1) + grad_sq(&ops, &u.u3)).sqrt(),
        div_resid: if l2_u > 0.0 { div_norm / l2_u } else { 0.0 },
    })
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, rows: &[(f64, Diagnostics)]) -> Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for (t, d) in rows {
        writeln!(
            w,
            "{t},{},{},{},{},{},{}",
            d.l2_theta, d.l3_theta, d.grad_theta, d.l2_u, d.grad_u, d.div_resid
        )?;
    }
    Ok(())
}

const MAGIC: &[u8; 4] = b"BSQ2";
const VERSION: u32 = 1;

/// Flat little-endian snapshot: magic, version, nx, nz, L, t, then the
/// values in row-major (x-major) order.
pub fn write_snapshot<W: Write>(mut w: W, theta: &ThetaField, t: f64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(theta.grid.nx as u64)?;
    w.write_u64::<LittleEndian>(theta.grid.nz as u64)?;
    w.write_f64::<LittleEndian>(theta.grid.l)?;
    w.write_f64::<LittleEndian>(t)?;
    for v in &theta.values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(ThetaField, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a BSQ2 snapshot".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let nx = r.read_u64::<LittleEndian>()? as usize;
    let nz = r.read_u64::<LittleEndian>()? as usize;
    let l = r.read_f64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let grid = Grid2D::new(l, nx, nz).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = vec![0.0; grid.len()];
    r.read_f64_into::<LittleEndian>(&mut values)?;
    Ok((ThetaField::new(grid, values)?, t))
}
