use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense matrix for the small, hot matrix-vector products of the
/// toy integrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { rows, cols, data }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Dense {
        let mut out = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Spectral (operator 2-) norm.
    pub fn operator_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let svd = self.to_nalgebra().svd(false, false);
        svd.singular_values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_skew(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) == -self.get(j, i)))
    }
}

/// Symmetric matrix with its eigendecomposition cached at construction.
///
/// All spectral functions (`exp(s A)`, `A^{-1}`, `(I + dt A)^{-1}`) are
/// evaluated through the eigenbasis, which gives an exact semigroup property
/// and stays bounded for large negative scales.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Column-major eigenvectors as returned by nalgebra.
    eigenvectors: DMatrix<f64>,
}

impl PartialEq for SymMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.entries == other.entries
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Dense {
            rows: self.n,
            cols: self.n,
            data: self.entries.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.rows != dense.cols {
            return Err(serde::de::Error::custom("symmetric matrix must be square"));
        }
        SymMatrix::new(dense.rows, dense.data).map_err(serde::de::Error::custom)
    }
}

impl SymMatrix {
    /// Accepts a row-major `n x n` array; rejects asymmetry beyond rounding.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix entries".into()));
        }
        let scale = entries.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((entries[i * n + j] - entries[j * n + i]).abs());
            }
        }
        if asym > 1e-13 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let mut sym = entries;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (sym[i * n + j] + sym[j * n + i]);
                sym[i * n + j] = v;
                sym[j * n + i] = v;
            }
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &sym));
        Ok(Self {
            n,
            entries: sym,
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut e = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            e[i * n + i] = *d;
        }
        Self::new(n, e).expect("diagonal matrices are symmetric")
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn as_dense(&self) -> Dense {
        Dense {
            rows: self.n,
            cols: self.n,
            data: self.entries.clone(),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `<A x, x> >= |x|^2`, checked on the smallest eigenvalue.
    pub fn is_elliptic(&self) -> bool {
        self.min_eigenvalue() >= 1.0 - 1e-12
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.as_dense().matvec(v)
    }

    /// `f(A) v` through the eigendecomposition.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must match matrix dimension");
        let q = &self.eigenvectors;
        let x = DVector::from_column_slice(v);
        let mut c = q.tr_mul(&x);
        for (ci, lam) in c.iter_mut().zip(&self.eigenvalues) {
            *ci *= f(*lam);
        }
        (q * c).iter().cloned().collect()
    }

    /// Dense `f(A)`, for precomputing step operators.
    pub fn function_matrix(&self, f: impl Fn(f64) -> f64) -> Dense {
        let q = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.n,
            self.eigenvalues.iter().map(|l| f(*l)),
        ));
        Dense::from_nalgebra(&(q * d * q.transpose()))
    }

    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.eigenvalues.iter().any(|l| l.abs() < 1e-300) {
            return Err(Error::Singular(
                "symmetric matrix has a zero eigenvalue".into(),
            ));
        }
        Ok(self.apply_fn(|l| 1.0 / l, v))
    }

    /// Eigenvalues and the orthonormal eigenvectors as columns of a row-major matrix.
    pub fn eigen(&self) -> (Vec<f64>, Dense) {
        (
            self.eigenvalues.clone(),
            Dense::from_nalgebra(&self.eigenvectors),
        )
    }
}

/// `exp(scale * a) v`.
pub fn matrix_exp_action(a: &SymMatrix, scale: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !scale.is_finite() {
        return Err(Error::invalid("matrix_exp_action: scale must be finite"));
    }
    if v.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: v.len(),
        });
    }
    Ok(a.apply_fn(|l| (scale * l).exp(), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_stream;

    /// Independent oracle: scaling and squaring with a truncated Taylor series.
    fn expm_taylor(a: &Dense, scale: f64) -> Dense {
        let n = a.rows;
        let mut m = a.clone();
        m.scale(scale);
        let norm = m.frobenius();
        let mut squarings = 0;
        let mut s = 1.0;
        while norm * s > 0.25 {
            s *= 0.5;
            squarings += 1;
        }
        m.scale(s);
        let mut result = Dense::identity(n);
        let mut term = Dense::identity(n);
        for k in 1..=20 {
            term = term.matmul(&m);
            term.scale(1.0 / k as f64);
            for (r, t) in result.data.iter_mut().zip(&term.data) {
                *r += t;
            }
        }
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        result
    }

    fn random_spd(n: usize, seed: u64) -> SymMatrix {
        let r = make_stream(seed, 0).normals(n * n);
        let r = Dense::from_rows(n, n, r).unwrap();
        let mut a = r.matmul(&r.transpose());
        for i in 0..n {
            a.data[i * n + i] += 1.0;
        }
        for i in 0..n {
            for j in 0..i {
                a.data[j * n + i] = a.data[i * n + j];
            }
        }
        SymMatrix::new(n, a.data).unwrap()
    }

    #[test]
    fn zero_matrix_is_identity() {
        let z = SymMatrix::new(3, vec![0.0; 9]).unwrap();
        let v = vec![1.0, -2.0, 3.5];
        assert_eq!(matrix_exp_action(&z, -40.0, &v).unwrap(), v);
    }

    #[test]
    fn diagonal_case() {
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let out = matrix_exp_action(&a, -1.0, &[1.0, 1.0]).unwrap();
        assert!((out[0] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((out[1] - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_scaling_and_squaring() {
        for seed in 0..5 {
            let a = random_spd(5, 100 + seed);
            let v = make_stream(seed, 9).normals(5);
            let got = matrix_exp_action(&a, -3.0, &v).unwrap();
            let oracle = expm_taylor(&a.as_dense(), -3.0).matvec(&v);
            let err = crate::numerics::dist(&got, &oracle) / crate::numerics::norm(&oracle);
            assert!(err < 1e-12, "relative error {err:e}");
        }
    }

    #[test]
    fn semigroup_property() {
        let a = random_spd(4, 42);
        let v = make_stream(1, 1).normals(4);
        let lhs = matrix_exp_action(&a, -0.7, &v).unwrap();
        let inner = matrix_exp_action(&a, -0.3, &v).unwrap();
        let rhs = matrix_exp_action(&a, -0.4, &inner).unwrap();
        let err = crate::numerics::dist(&lhs, &rhs) / crate::numerics::norm(&lhs);
        assert!(err < 1e-12);
    }

    #[test]
    fn large_negative_scale_stays_finite() {
        let a = random_spd(4, 3);
        let out = matrix_exp_action(&a, -1e8, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(out.iter().all(|x| x.is_finite() && x.abs() < 1e-100));
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            SymMatrix::new(2, vec![1.0, 2.0, 3.0, 1.0]),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn elliptic_flag() {
        assert!(random_spd(4, 7).is_elliptic());
        assert!(!SymMatrix::from_diagonal(&[0.5, 2.0]).is_elliptic());
    }
}
