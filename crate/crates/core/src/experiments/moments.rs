use serde::{Deserialize, Serialize};

use super::config::{StudyConfig, SystemChoice};
use super::model::Model;
use super::{elapsed, start_clock, Row, SeedEntry, Table};
use crate::numerics::make_stream;
use crate::sde::{energy_functionals, IntegratorSpec};
use crate::toy::ToyState;
use crate::transport::exp_moment_tail;
use crate::{Error, Result};

const MOMENTS_TAG: u64 = 0x4d_4f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub functional: String,
    pub k: f64,
    pub empirical: f64,
    pub bound: f64,
    pub halfwidth3s: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub eta: f64,
    pub sigma_sq: f64,
    pub n_paths: usize,
    pub t: f64,
    pub rows: Vec<MomentRow>,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_s: f64,
}

impl MomentReport {
    pub fn all_within(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound)
    }

    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        for r in &self.rows {
            rows.push(Row::new(
                r.k,
                format!("{}_tail", r.functional),
                r.empirical,
                0.0,
                self.n_paths,
            ));
            rows.push(Row::new(
                r.k,
                format!("{}_bound", r.functional),
                r.bound,
                r.halfwidth3s,
                self.n_paths,
            ));
        }
        Table { key: "k", rows }
    }
}

/// Tails of the two energy functionals of the toy limit system started at
/// the origin, against `exp(-eta K)` with `eta = 1 / (2 |sigma|^2)`.
pub fn run_moment_study(cfg: &StudyConfig) -> Result<MomentReport> {
    cfg.validate()?;
    cfg.require(SystemChoice::Toy)?;
    let clock = start_clock();
    let Model::Toy { inst, dt } = Model::from_config(cfg)? else {
        unreachable!("toy config yields a toy model")
    };
    let s2 = inst.sigma_sq();
    if !(s2 > 0.0) {
        return Err(Error::Config("moments: the noise must be non-zero".into()));
    }
    let eta = 1.0 / (2.0 * s2);
    let mo = &cfg.moments;
    let spec = IntegratorSpec::stiff(dt, mo.t)?;
    let root = make_stream(cfg.seed, MOMENTS_TAG);
    let f = energy_functionals(
        &inst,
        0.0,
        &spec,
        &ToyState::zeros(&inst),
        mo.n_paths,
        &root,
    )?;
    let ks: Vec<f64> = mo.k_multipliers.iter().map(|k| k / eta).collect();
    let mut rows = Vec::new();
    for (name, xs) in [
        (
            "running_sup",
            f.iter().map(|e| e.running_sup).collect::<Vec<f64>>(),
        ),
        ("terminal", f.iter().map(|e| e.terminal).collect()),
    ] {
        for r in exp_moment_tail(&xs, eta, &ks)? {
            rows.push(MomentRow {
                functional: name.into(),
                k: r.k,
                empirical: r.empirical,
                bound: r.bound,
                halfwidth3s: r.halfwidth3s,
                within_bound: r.within_bound(),
            });
        }
    }
    Ok(MomentReport {
        eta,
        sigma_sq: s2,
        n_paths: mo.n_paths,
        t: spec.n_steps() as f64 * dt,
        rows,
        seeds: vec![SeedEntry::new("path root (child i)", &root)],
        wall_clock_s: elapsed(clock),
    })
}
