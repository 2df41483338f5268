use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"EMPM";
const VERSION: u32 = 1;

/// Weighted cloud of equal-dimension samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// Row-major `n x dim`.
    samples: Vec<f64>,
    weights: Vec<f64>,
    pub meta: String,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim.max(1),
                found: samples.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights must be non-negative"));
        }
        let total = crate::numerics::pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            dim,
            samples,
            weights,
            meta: String::new(),
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "uniform measure needs a non-empty n x dim sample array",
            ));
        }
        let n = samples.len() / dim;
        Self::new(dim, samples, vec![1.0 / n as f64; n])
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("all samples must share one dimension"));
        }
        Self::uniform(dim, points.concat())
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Push-forward under the coordinate projection onto `range`.
    pub fn project(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.dim || range.is_empty() {
            return Err(Error::invalid("projection range outside sample dimension"));
        }
        let dim = range.len();
        let samples = self
            .samples()
            .flat_map(|s| s[range.clone()].iter().copied())
            .collect();
        Ok(Self {
            dim,
            samples,
            weights: self.weights.clone(),
            meta: self.meta.clone(),
        })
    }

    /// First `n` samples, reweighted uniformly.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::uniform(self.dim, self.samples[..n * self.dim].to_vec())
    }

    pub fn mean_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .samples()
            .zip(&self.weights)
            .map(|(s, w)| w * f(s))
            .collect();
        crate::numerics::pairwise_sum(&terms)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        w.write_u64::<LittleEndian>(self.dim as u64)?;
        for x in self.weights.iter().chain(&self.samples) {
            w.write_f64::<LittleEndian>(*x)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an EMPM measure file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported EMPM version {version}")));
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let mut read = |k: usize| -> Result<Vec<f64>> {
            let mut v = vec![0.0; k];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let weights = read(n)?;
        let samples = read(n * dim)?;
        Self::new(dim, samples, weights)
    }
}
