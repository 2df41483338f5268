use serde::{Deserialize, Serialize};

use crate::numerics::{Dense, RngStream, SymMatrix};
use crate::{Error, Result};

/// One toy system: `a1, a2` elliptic, `e` the coupling, `b1, b2` skew
/// bilinear maps, `sigma` the forcing directions and `ra` the Rayleigh number.
///
/// The bilinear maps are stored as skew "actions": `b1(v,u) = sum_k v_k S1[k] u`
/// and `b2(v,theta) = sum_k v_k S2[k] theta` with each `S` exactly skew, so the
/// cancellation `<b(v,x),x> = 0` holds identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToyInstanceData", into = "ToyInstanceData")]
pub struct ToyInstance {
    pub m1: usize,
    pub m2: usize,
    pub n_forced: usize,
    pub a1: SymMatrix,
    pub a2: SymMatrix,
    pub e: Dense,
    pub b1: Vec<Dense>,
    pub b2: Vec<Dense>,
    pub sigma: Dense,
    pub ra: f64,
}

/// Plain serialisable form of [`ToyInstance`], validated on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyInstanceData {
    pub m1: usize,
    pub m2: usize,
    pub n_forced: usize,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub e: Vec<f64>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub ra: f64,
}

impl From<ToyInstance> for ToyInstanceData {
    fn from(t: ToyInstance) -> Self {
        Self {
            m1: t.m1,
            m2: t.m2,
            n_forced: t.n_forced,
            a1: t.a1.entries().to_vec(),
            a2: t.a2.entries().to_vec(),
            e: t.e.data,
            b1: t.b1.into_iter().map(|m| m.data).collect(),
            b2: t.b2.into_iter().map(|m| m.data).collect(),
            sigma: t.sigma.data,
            ra: t.ra,
        }
    }
}

impl TryFrom<ToyInstanceData> for ToyInstance {
    type Error = Error;

    fn try_from(d: ToyInstanceData) -> Result<Self> {
        let (m1, m2) = (d.m1, d.m2);
        let to_dense = |rows, cols, v: Vec<f64>| Dense::from_rows(rows, cols, v);
        let b1 =
            d.b1.into_iter()
                .map(|v| to_dense(m1, m1, v))
                .collect::<Result<Vec<_>>>()?;
        let b2 =
            d.b2.into_iter()
                .map(|v| to_dense(m2, m2, v))
                .collect::<Result<Vec<_>>>()?;
        ToyInstance::from_parts(
            SymMatrix::new(m1, d.a1)?,
            SymMatrix::new(m2, d.a2)?,
            to_dense(m1, m2, d.e)?,
            b1,
            b2,
            to_dense(m2, d.n_forced, d.sigma)?,
            d.ra,
        )
    }
}

fn random_dense(stream: &RngStream, rows: usize, cols: usize, scale: f64) -> Dense {
    let mut m = Dense::from_rows(rows, cols, stream.normals(rows * cols)).expect("sized");
    m.scale(scale);
    m
}

fn random_skew(stream: &RngStream, n: usize, scale: f64) -> Dense {
    let r = random_dense(stream, n, n, scale);
    let mut s = Dense::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s.data[i * n + j] = r.get(i, j) - r.get(j, i);
        }
    }
    s
}

fn identity_plus_gram(stream: &RngStream, n: usize) -> SymMatrix {
    let r = random_dense(stream, n, n, 1.0 / (n as f64).sqrt());
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..n {
                s += r.get(i, k) * r.get(j, k);
            }
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    SymMatrix::new(n, a).expect("Gram construction is symmetric")
}

/// Random instance satisfying ellipticity and cancellation by construction:
/// `a_i = I + R_i R_i^T`, skew actions for `b1, b2`, and `sigma` rescaled so
/// that `sum_k |sigma_k|^2 = noise_scale^2`.
pub fn make_instance(
    m1: usize,
    m2: usize,
    n_forced: usize,
    ra: f64,
    noise_scale: f64,
    stream: &RngStream,
) -> Result<ToyInstance> {
    if m1 == 0 || m2 == 0 || n_forced == 0 {
        return Err(Error::invalid("toy dimensions must be >= 1"));
    }
    if !(ra > 0.0) || !(noise_scale >= 0.0) {
        return Err(Error::invalid("need ra > 0 and noise_scale >= 0"));
    }
    if n_forced > m2 {
        return Err(Error::invalid(format!(
            "n_forced = {n_forced} exceeds the temperature dimension m2 = {m2}"
        )));
    }
    let a1 = identity_plus_gram(&stream.child(1), m1);
    let a2 = identity_plus_gram(&stream.child(2), m2);
    let e = random_dense(&stream.child(3), m1, m2, 1.0 / (m2 as f64).sqrt());
    let skew_scale = 1.0 / (m1.max(m2) as f64).sqrt();
    let b1 = (0..m1)
        .map(|k| random_skew(&stream.child(100 + k as u64), m1, skew_scale))
        .collect();
    let b2 = (0..m1)
        .map(|k| random_skew(&stream.child(1000 + k as u64), m2, skew_scale))
        .collect();
    let mut sigma = random_dense(&stream.child(4), m2, n_forced, 1.0);
    let fro = sigma.frobenius();
    if noise_scale == 0.0 || fro == 0.0 {
        sigma = Dense::zeros(m2, n_forced);
    } else {
        sigma.scale(noise_scale / fro);
    }
    ToyInstance::from_parts(a1, a2, e, b1, b2, sigma, ra)
}

impl ToyInstance {
    pub fn from_parts(
        a1: SymMatrix,
        a2: SymMatrix,
        e: Dense,
        b1: Vec<Dense>,
        b2: Vec<Dense>,
        sigma: Dense,
        ra: f64,
    ) -> Result<Self> {
        let m1 = a1.n();
        let m2 = a2.n();
        let n_forced = sigma.cols;
        if !a1.is_elliptic() || !a2.is_elliptic() {
            return Err(Error::invalid("a1 and a2 must satisfy <a x, x> >= |x|^2"));
        }
        if e.rows != m1 || e.cols != m2 {
            return Err(Error::DimensionMismatch {
                expected: m1 * m2,
                found: e.rows * e.cols,
            });
        }
        if sigma.rows != m2 {
            return Err(Error::DimensionMismatch {
                expected: m2,
                found: sigma.rows,
            });
        }
        if b1.len() != m1 || b2.len() != m1 {
            return Err(Error::invalid(
                "b1 and b2 need one skew action per velocity component",
            ));
        }
        if !b1.iter().all(|s| s.rows == m1 && s.is_skew())
            || !b2.iter().all(|s| s.rows == m2 && s.is_skew())
        {
            return Err(Error::invalid(
                "bilinear actions must be exactly skew-symmetric",
            ));
        }
        if !(ra > 0.0) {
            return Err(Error::invalid("ra must be positive"));
        }
        Ok(Self {
            m1,
            m2,
            n_forced,
            a1,
            a2,
            e,
            b1,
            b2,
            sigma,
            ra,
        })
    }

    /// Same instance with both bilinear terms removed (the linear / OU case).
    pub fn linearized(&self) -> Self {
        let mut out = self.clone();
        out.b1 = vec![Dense::zeros(self.m1, self.m1); self.m1];
        out.b2 = vec![Dense::zeros(self.m2, self.m2); self.m1];
        out
    }

    pub fn with_sigma(&self, sigma: Dense) -> Result<Self> {
        Self::from_parts(
            self.a1.clone(),
            self.a2.clone(),
            self.e.clone(),
            self.b1.clone(),
            self.b2.clone(),
            sigma,
            self.ra,
        )
    }

    /// `Ra e(theta)`.
    pub fn buoyancy(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = self.e.matvec(theta);
        out.iter_mut().for_each(|x| *x *= self.ra);
        out
    }

    pub fn b1(&self, v: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m1];
        apply_skew_action(&self.b1, v, u, &mut out);
        out
    }

    pub fn b2(&self, v: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m2];
        apply_skew_action(&self.b2, v, theta, &mut out);
        out
    }

    pub(crate) fn b1_into(&self, v: &[f64], u: &[f64], out: &mut [f64]) {
        apply_skew_action(&self.b1, v, u, out);
    }

    pub(crate) fn b2_into(&self, v: &[f64], theta: &[f64], out: &mut [f64]) {
        apply_skew_action(&self.b2, v, theta, out);
    }

    /// `|sigma|^2 = sum_k |sigma_k|^2`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma.data.iter().map(|x| x * x).sum()
    }

    pub fn e_norm(&self) -> f64 {
        self.e.operator_norm()
    }

    pub fn has_bilinear_terms(&self) -> bool {
        self.b1
            .iter()
            .chain(&self.b2)
            .any(|m| m.data.iter().any(|x| *x != 0.0))
    }
}

fn apply_skew_action(actions: &[Dense], v: &[f64], x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (vk, s) in v.iter().zip(actions) {
        if *vk == 0.0 {
            continue;
        }
        for (o, row) in out.iter_mut().zip(s.data.chunks_exact(s.cols)) {
            *o += vk * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}
