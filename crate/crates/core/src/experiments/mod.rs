//! Runnable studies: finite-time eps-convergence with corrector gaps,
//! invariant-measure distances, contraction certificates, moment-bound
//! audits, low-mode control decay and hitting probabilities.
//!
//! Every study is a pure function of its resolved [`StudyConfig`]. Replica `i`
//! always draws from the same keyed stream, whatever the thread count, and all
//! reductions run in index order, so reports are bit-reproducible.

mod config;
mod contraction;
mod control;
mod convergence;
mod fit;
mod model;
mod moments;

pub use config::{
    ContractionSection, ControlSection, InvariantSection, IrreducibilitySection, MomentsSection,
    SpdeSection, StudyConfig, SystemChoice, ToySection, SCHEMA_VERSION,
};
pub use contraction::{random_pairs, run_contraction_study, ContractionReport, PairCurve};
pub use control::{
    run_control_study, run_irreducibility_study, ControlCell, ControlReport, Fraction,
    IrreducibilityReport,
};
pub use convergence::{run_finite_time_study, run_invariant_study};
pub use fit::{fit_rate, fit_with_error, RateFit};
pub use moments::{run_moment_study, MomentReport, MomentRow};

use serde::{Deserialize, Serialize};

use crate::numerics::{mean_and_stderr, RngStream};

/// One Monte Carlo estimate with its 3 sigma half-width. `censored` marks a
/// value statistically indistinguishable from zero, which is kept out of
/// log-log fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub eps: f64,
    pub metric: String,
    pub estimate: f64,
    pub halfwidth3s: f64,
    pub n: usize,
    pub censored: bool,
}

impl Estimate {
    fn from_samples(eps: f64, metric: &str, xs: &[f64]) -> Self {
        let (m, se) = mean_and_stderr(xs);
        let hw = if se.is_finite() { 3.0 * se } else { 0.0 };
        Self::new(eps, metric, m, hw, xs.len())
    }

    fn new(eps: f64, metric: &str, estimate: f64, halfwidth3s: f64, n: usize) -> Self {
        Self {
            eps,
            metric: metric.to_string(),
            estimate,
            halfwidth3s,
            n,
            censored: !(estimate > halfwidth3s) || estimate <= 0.0,
        }
    }
}

/// A labelled seed, so that the manifest lists every stream a study used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub purpose: String,
    pub root_seed: u64,
    pub stream_id: u64,
}

impl SeedEntry {
    fn new(purpose: &str, s: &RngStream) -> Self {
        Self {
            purpose: purpose.to_string(),
            root_seed: s.root_seed,
            stream_id: s.stream_id,
        }
    }
}

/// Per-eps estimates and fitted rates of the finite-time and invariant studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub study: String,
    pub system: SystemChoice,
    pub eps_grid: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// One fit per metric; `None` when fewer than two values survive censoring.
    pub fits: Vec<(String, Option<RateFit>)>,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_s: f64,
}

impl ConvergenceReport {
    /// Estimates of one metric in eps-grid order.
    pub fn series(&self, metric: &str) -> Vec<&Estimate> {
        self.estimates
            .iter()
            .filter(|e| e.metric == metric)
            .collect()
    }

    pub fn fit(&self, metric: &str) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|(m, _)| m == metric)
            .and_then(|(_, f)| f.as_ref())
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.estimates {
            if !out.contains(&e.metric) {
                out.push(e.metric.clone());
            }
        }
        out
    }

    fn fit_all(&mut self) {
        self.fits = self
            .metrics()
            .into_iter()
            .map(|m| {
                let f = fit_with_error(&self.series(&m));
                (m, f)
            })
            .collect();
    }

    pub fn table(&self) -> Table {
        Table {
            key: "eps",
            rows: self
                .estimates
                .iter()
                .map(|e| Row {
                    key: e.eps,
                    metric: e.metric.clone(),
                    estimate: e.estimate,
                    halfwidth3s: e.halfwidth3s,
                    n: e.n,
                })
                .collect(),
        }
    }
}

/// Flat CSV view of any report: `<key>,metric,estimate,halfwidth3s,n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub key: &'static str,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: f64,
    pub metric: String,
    pub estimate: f64,
    pub halfwidth3s: f64,
    pub n: usize,
}

impl Row {
    fn new(key: f64, metric: impl Into<String>, estimate: f64, halfwidth3s: f64, n: usize) -> Self {
        Self {
            key,
            metric: metric.into(),
            estimate,
            halfwidth3s,
            n,
        }
    }
}

impl Table {
    pub fn header(&self) -> String {
        format!("{},metric,estimate,halfwidth3s,n", self.key)
    }

    /// Shortest round-trip float formatting, so the text is a function of the
    /// bits alone.
    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.key, r.metric, r.estimate, r.halfwidth3s, r.n
            ));
        }
        s
    }
}

// Browsers without WASI have no monotonic clock in std; wall times read 0 there.
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
mod clock {
    pub type Clock = std::time::Instant;

    pub fn start_clock() -> Clock {
        std::time::Instant::now()
    }

    pub fn elapsed(start: Clock) -> f64 {
        start.elapsed().as_secs_f64()
    }
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
mod clock {
    #[derive(Clone, Copy)]
    pub struct Clock;

    pub fn start_clock() -> Clock {
        Clock
    }

    pub fn elapsed(_: Clock) -> f64 {
        0.0
    }
}

use clock::{elapsed, start_clock};
