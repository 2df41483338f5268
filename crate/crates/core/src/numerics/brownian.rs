use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::{RngStream, StreamRng};
use crate::{Error, Result};

const REFINE_TAG: u64 = 0x7265_6669_6e65;

/// Streams Gaussian increments with variance `dt` per component, in the same
/// order as [`brownian_path`] lays them out. Simulations that do not need the
/// whole path in memory draw from this directly.
pub struct IncrementSource {
    rng: StreamRng,
    sqrt_dt: f64,
    dim: usize,
}

impl IncrementSource {
    pub fn new(stream: &RngStream, dt: f64, dim: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            rng: stream.rng(),
            sqrt_dt: dt.sqrt(),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for x in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *x = self.sqrt_dt * z;
        }
    }
}

/// A discretised `dim`-dimensional Brownian path, stored as increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub dt: f64,
    pub n_steps: usize,
    pub dim: usize,
    /// Row-major `n_steps x dim`.
    pub increments: Vec<f64>,
    pub origin: RngStream,
}

impl NoisePath {
    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.dim..(step + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Sum `factor` consecutive increments; inverse of [`refine_path`].
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        let n = self.n_steps / factor;
        let mut inc = vec![0.0; n * self.dim];
        for i in 0..n {
            for c in 0..self.dim {
                let mut s = 0.0;
                for f in 0..factor {
                    s += self.increments[(i * factor + f) * self.dim + c];
                }
                inc[i * self.dim + c] = s;
            }
        }
        Ok(NoisePath {
            dt: self.dt * factor as f64,
            n_steps: n,
            dim: self.dim,
            increments: inc,
            origin: self.origin,
        })
    }
}

pub fn brownian_path(stream: &RngStream, dt: f64, n_steps: usize, dim: usize) -> Result<NoisePath> {
    if n_steps == 0 || dim == 0 {
        return Err(Error::invalid(
            "brownian_path needs n_steps >= 1 and dim >= 1",
        ));
    }
    let mut src = IncrementSource::new(stream, dt, dim)?;
    let mut increments = vec![0.0; n_steps * dim];
    for row in increments.chunks_exact_mut(dim) {
        src.next_into(row);
    }
    Ok(NoisePath {
        dt,
        n_steps,
        dim,
        increments,
        origin: *stream,
    })
}

/// Refine a path by an integer factor, filling each coarse interval with a
/// Brownian bridge. The fine increments of a coarse step sum (in order) to
/// the coarse increment; the last fine increment absorbs the remainder.
pub fn refine_path(path: &NoisePath, factor: usize) -> Result<NoisePath> {
    if factor < 2 {
        return Err(Error::invalid(format!(
            "refinement factor must be >= 2, got {factor}"
        )));
    }
    let fine_dt = path.dt / factor as f64;
    let origin = path.origin.child(REFINE_TAG ^ factor as u64);
    let mut src = IncrementSource::new(&origin, fine_dt, factor)?;
    let mut z = vec![0.0; factor];
    let dim = path.dim;
    let mut out = vec![0.0; path.n_steps * factor * dim];
    for step in 0..path.n_steps {
        for c in 0..dim {
            let coarse = path.increments[step * dim + c];
            src.next_into(&mut z);
            let zbar = z.iter().sum::<f64>() / factor as f64;
            let share = coarse / factor as f64;
            let mut partial = 0.0;
            for f in 0..factor {
                let v = if f + 1 == factor {
                    coarse - partial
                } else {
                    z[f] - zbar + share
                };
                partial += v;
                out[(step * factor + f) * dim + c] = v;
            }
        }
    }
    Ok(NoisePath {
        dt: fine_dt,
        n_steps: path.n_steps * factor,
        dim,
        increments: out,
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_stream;

    #[test]
    fn unit_dt_variance() {
        let p = brownian_path(&make_stream(1, 2), 1.0, 100_000, 1).unwrap();
        let n = p.increments.len() as f64;
        let m = p.increments.iter().sum::<f64>() / n;
        let v = p.increments.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        assert!((0.99..=1.01).contains(&v), "variance {v}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = make_stream(1, 2);
        assert!(brownian_path(&s, 0.1, 0, 1).is_err());
        assert!(brownian_path(&s, 0.0, 10, 1).is_err());
        assert!(brownian_path(&s, -1.0, 10, 1).is_err());
        let p = brownian_path(&s, 0.1, 3, 1).unwrap();
        assert!(refine_path(&p, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let s = make_stream(9, 4);
        assert_eq!(
            brownian_path(&s, 0.01, 50, 3).unwrap(),
            brownian_path(&s, 0.01, 50, 3).unwrap()
        );
    }

    #[test]
    fn streaming_matches_materialised() {
        let s = make_stream(9, 4);
        let p = brownian_path(&s, 0.01, 20, 3).unwrap();
        let mut src = IncrementSource::new(&s, 0.01, 3).unwrap();
        let mut buf = [0.0; 3];
        for k in 0..20 {
            src.next_into(&mut buf);
            assert_eq!(&buf[..], p.increment(k));
        }
    }

    #[test]
    fn refinement_preserves_coarse_increments() {
        let p = brownian_path(&make_stream(5, 0), 0.1, 200, 2).unwrap();
        for factor in [2, 3, 8] {
            let fine = refine_path(&p, factor).unwrap();
            assert_eq!(fine.n_steps, 200 * factor);
            let back = fine.coarsen(factor).unwrap();
            for (a, b) in back.increments.iter().zip(&p.increments) {
                assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn one_step_refined_in_two() {
        let p = brownian_path(&make_stream(5, 1), 1.0, 1, 1).unwrap();
        let fine = refine_path(&p, 2).unwrap();
        assert_eq!(fine.increments.len(), 2);
        assert!((fine.increments[0] + fine.increments[1] - p.increments[0]).abs() < 1e-15);
    }

    #[test]
    fn bridge_fill_variance() {
        // Given the sum over [0, dt], the first half-increment has variance dt/4.
        let dt = 0.5;
        let n = 100_000;
        let p = brownian_path(&make_stream(8, 8), dt, n, 1).unwrap();
        let fine = refine_path(&p, 2).unwrap();
        let dev: Vec<f64> = (0..n)
            .map(|i| fine.increments[2 * i] - 0.5 * p.increments[i])
            .collect();
        let var = dev.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let target = dt / 4.0;
        assert!(
            (var / target - 1.0).abs() < 0.05,
            "bridge variance {var} vs {target}"
        );
    }
}
