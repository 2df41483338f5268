use serde::{Deserialize, Serialize};

use crate::spectral::Grid2D;
use crate::transport::GroundMetric;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemChoice {
    Toy,
    Spde,
}

/// Random toy instance; `instance_seed` fixes the coefficients independently
/// of the replica seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub m1: usize,
    pub m2: usize,
    pub n_forced: usize,
    pub ra: f64,
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Drop both bilinear terms.
    #[serde(default)]
    pub linear: bool,
    #[serde(default = "one_u64")]
    pub instance_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeSection {
    #[serde(rename = "L", default = "one")]
    pub l: f64,
    #[serde(default = "nx_default")]
    pub nx: usize,
    #[serde(default = "nz_default")]
    pub nz: usize,
    #[serde(default = "ra_default")]
    pub ra: f64,
    #[serde(default = "one")]
    pub ratilde: f64,
    #[serde(default = "n_forced_default")]
    pub n_forced: usize,
    /// Multiplies every Brownian increment.
    #[serde(default = "one")]
    pub sigma_scale: f64,
}

impl Default for SpdeSection {
    fn default() -> Self {
        Self {
            l: 1.0,
            nx: nx_default(),
            nz: nz_default(),
            ra: ra_default(),
            ratilde: 1.0,
            n_forced: n_forced_default(),
            sigma_scale: 1.0,
        }
    }
}

impl SpdeSection {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.l, self.nx, self.nz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSection {
    /// Horizon of the shared-noise coupling from stationary data.
    #[serde(default = "one")]
    pub t_star: f64,
    /// Number of batches behind the Wasserstein half-width.
    #[serde(default = "batches_default")]
    pub batches: usize,
}

impl Default for InvariantSection {
    fn default() -> Self {
        Self {
            t_star: 1.0,
            batches: batches_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSection {
    #[serde(default = "n_pairs_default")]
    pub n_pairs: usize,
    #[serde(default = "t_grid_default")]
    pub t_grid: Vec<f64>,
    /// Standard deviation of each coordinate of the random initial points.
    #[serde(default = "one")]
    pub pair_scale: f64,
}

impl Default for ContractionSection {
    fn default() -> Self {
        Self {
            n_pairs: n_pairs_default(),
            t_grid: t_grid_default(),
            pair_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default = "n_proj_grid_default")]
    pub n_proj_grid: Vec<usize>,
    /// Empty means `lambda = lambda_{n_proj}` for each entry of the grid.
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "hundred")]
    pub n_paths: usize,
    /// `|rho(t)| <= threshold |xi|` counts as decayed.
    #[serde(default = "tenth")]
    pub threshold: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            n_proj_grid: n_proj_grid_default(),
            lambda_grid: Vec::new(),
            n_paths: 100,
            threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrreducibilitySection {
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "delta_irr_default")]
    pub delta: f64,
    #[serde(default = "five")]
    pub t: f64,
    #[serde(default = "thousand")]
    pub n_paths: usize,
    /// Damped variant; `None` picks the smallest N with `lambda_N` above the
    /// damping threshold.
    #[serde(default)]
    pub n_proj: Option<usize>,
    /// `None` means `lambda_N`.
    #[serde(default)]
    pub lambda_damp: Option<f64>,
}

impl Default for IrreducibilitySection {
    fn default() -> Self {
        Self {
            m: 1.0,
            delta: delta_irr_default(),
            t: 5.0,
            n_paths: 1000,
            n_proj: None,
            lambda_damp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    /// Thresholds as multiples of `1 / eta`.
    #[serde(default = "k_default")]
    pub k_multipliers: Vec<f64>,
    #[serde(default = "moment_paths_default")]
    pub n_paths: usize,
    #[serde(default = "one")]
    pub t: f64,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self {
            k_multipliers: k_default(),
            n_paths: moment_paths_default(),
            t: 1.0,
        }
    }
}

/// A study description. Optional fields left out of a file are filled by
/// [`StudyConfig::resolve`]; the resolved form round-trips through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    pub system: SystemChoice,
    #[serde(default)]
    pub toy: Option<ToySection>,
    #[serde(default)]
    pub spde: Option<SpdeSection>,
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "replicas_default")]
    pub n_replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Default 1e-3 (toy) or 2e-3 (spde).
    #[serde(default)]
    pub dt: Option<f64>,
    /// Default 4 (toy) or 1 (spde).
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "metric_default")]
    pub metric: GroundMetric,
    /// Exponent of the small-moment metric `E|theta^eps - theta^0|^delta`.
    #[serde(default = "delta_default")]
    pub delta: f64,
    #[serde(default = "out_default")]
    pub out_dir: String,
    #[serde(default)]
    pub invariant: InvariantSection,
    #[serde(default)]
    pub contraction: ContractionSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub irreducibility: IrreducibilitySection,
    #[serde(default)]
    pub moments: MomentsSection,
}

impl StudyConfig {
    /// Defaults for the chosen system, so that the config echoed into a
    /// manifest is complete.
    pub fn resolve(mut self) -> Result<Self> {
        let toy = self.system == SystemChoice::Toy;
        self.dt.get_or_insert(if toy { 1e-3 } else { 2e-3 });
        self.burn_in.get_or_insert(if toy { 4.0 } else { 1.0 });
        if !toy && self.spde.is_none() {
            self.spde = Some(SpdeSection::default());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        match self.system {
            SystemChoice::Toy => {
                let Some(toy) = &self.toy else {
                    return bad("toy", "required when system is \"toy\"".into());
                };
                if toy.m1 == 0 || toy.m2 == 0 || toy.n_forced == 0 || toy.n_forced > toy.m2 {
                    return bad("toy", "need m1, m2 >= 1 and 1 <= n_forced <= m2".into());
                }
                if !(toy.ra > 0.0) || !(toy.noise_scale >= 0.0) {
                    return bad("toy", "need ra > 0 and noise_scale >= 0".into());
                }
            }
            SystemChoice::Spde => {
                let Some(sp) = &self.spde else {
                    return bad("spde", "required when system is \"spde\"".into());
                };
                sp.grid().map_err(|e| Error::Config(format!("spde: {e}")))?;
                if !(sp.ra >= 0.0)
                    || !(sp.ratilde >= 0.0)
                    || sp.n_forced == 0
                    || !(sp.sigma_scale >= 0.0)
                {
                    return bad(
                        "spde",
                        "need ra, ratilde, sigma_scale >= 0 and n_forced >= 1".into(),
                    );
                }
            }
        }
        for (i, e) in self.eps_grid.iter().enumerate() {
            if !(*e > 0.0) || !e.is_finite() {
                return bad("eps_grid", format!("entries must be positive, got {e}"));
            }
            if i > 0 && !(*e < self.eps_grid[i - 1]) {
                return bad("eps_grid", "must be strictly decreasing".into());
            }
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return bad("t", format!("must be positive, got {}", self.t));
        }
        if self.n_replicas < 16 {
            return bad(
                "n_replicas",
                format!("must be at least 16, got {}", self.n_replicas),
            );
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || dt > self.t {
                return bad("dt", format!("must lie in (0, t], got {dt}"));
            }
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0) || !b.is_finite() {
                return bad("burn_in", format!("must be non-negative, got {b}"));
            }
        }
        if !(self.metric.eta >= 0.0) || !self.metric.eta.is_finite() {
            return bad("metric", "eta must be finite and non-negative".into());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta", format!("must lie in (0, 1], got {}", self.delta));
        }
        if !(self.invariant.t_star > 0.0) || self.invariant.batches < 2 {
            return bad("invariant", "need t_star > 0 and batches >= 2".into());
        }
        let c = &self.contraction;
        if c.n_pairs == 0 || c.t_grid.iter().any(|t| !(*t >= 0.0)) || !(c.pair_scale > 0.0) {
            return bad(
                "contraction",
                "need n_pairs >= 1, t_grid >= 0 and pair_scale > 0".into(),
            );
        }
        if c.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("contraction", "t_grid must be increasing".into());
        }
        let ctl = &self.control;
        if ctl.n_proj_grid.is_empty() || ctl.n_paths < 2 || !(ctl.threshold > 0.0) {
            return bad(
                "control",
                "need a non-empty n_proj_grid, n_paths >= 2 and threshold > 0".into(),
            );
        }
        if ctl.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return bad("control", "lambda_grid entries must be >= 0".into());
        }
        let irr = &self.irreducibility;
        if !(irr.m >= 0.0) || !(irr.delta > 0.0) || !(irr.t > 0.0) || irr.n_paths == 0 {
            return bad(
                "irreducibility",
                "need m >= 0, delta > 0, t > 0 and n_paths >= 1".into(),
            );
        }
        let mo = &self.moments;
        if mo.k_multipliers.iter().any(|k| !(*k > 0.0)) || mo.n_paths < 2 || !(mo.t > 0.0) {
            return bad(
                "moments",
                "need positive k_multipliers, n_paths >= 2 and t > 0".into(),
            );
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(if self.system == SystemChoice::Toy {
            1e-3
        } else {
            2e-3
        })
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or(if self.system == SystemChoice::Toy {
            4.0
        } else {
            1.0
        })
    }

    pub fn require_eps_grid(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::Config(
                "eps_grid: must not be empty for this study".into(),
            ));
        }
        Ok(())
    }

    pub fn require(&self, system: SystemChoice) -> Result<()> {
        if self.system != system {
            return Err(Error::Config(format!(
                "system: this study needs {system:?}, got {:?}",
                self.system
            )));
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn five() -> f64 {
    5.0
}
fn tenth() -> f64 {
    0.1
}
fn hundred() -> usize {
    100
}
fn thousand() -> usize {
    1000
}
fn nx_default() -> usize {
    32
}
fn nz_default() -> usize {
    33
}
fn ra_default() -> f64 {
    50.0
}
fn n_forced_default() -> usize {
    8
}
fn batches_default() -> usize {
    8
}
fn n_pairs_default() -> usize {
    20
}
fn t_grid_default() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
}
fn n_proj_grid_default() -> Vec<usize> {
    vec![4, 8, 16]
}
fn delta_irr_default() -> f64 {
    0.3
}
fn k_default() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn moment_paths_default() -> usize {
    100_000
}
fn schema_default() -> u32 {
    SCHEMA_VERSION
}
fn replicas_default() -> usize {
    64
}
fn metric_default() -> GroundMetric {
    GroundMetric::chord(0.1)
}
fn delta_default() -> f64 {
    0.25
}
fn out_default() -> String {
    "out".into()
}
