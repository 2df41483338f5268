use serde::{Deserialize, Serialize};

use super::config::{StudyConfig, SystemChoice};
use super::model::{random_field, Model, Sys};
use super::{elapsed, start_clock, Row, SeedEntry, Table};
use crate::numerics::{make_stream, mean_and_stderr};
use crate::par::map_indexed;
use crate::transport::ground_cost;
use crate::{Error, Result};

const CONTRACTION_TAG: u64 = 0x43_4f;

/// Coupled-cost ratio `E rho(theta_t, theta~_t) / rho(theta_0, theta~_0)` of
/// one initial pair along `t_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCurve {
    pub rho0: f64,
    pub t_grid: Vec<f64>,
    pub ratio: Vec<f64>,
    pub halfwidth3s: Vec<f64>,
    /// Earliest grid time with `ratio + halfwidth < 1`.
    pub certificate_t: Option<f64>,
}

impl PairCurve {
    pub fn at(&self, t: f64) -> Option<(f64, f64)> {
        let k = self.t_grid.iter().position(|s| (s - t).abs() < 1e-12)?;
        Some((self.ratio[k], self.halfwidth3s[k]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub system: SystemChoice,
    pub eta: f64,
    pub n_replicas: usize,
    pub pairs: Vec<PairCurve>,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_s: f64,
}

impl ContractionReport {
    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        for (k, p) in self.pairs.iter().enumerate() {
            for j in 0..p.t_grid.len() {
                rows.push(Row::new(
                    p.t_grid[j],
                    format!("ratio_pair{k}"),
                    p.ratio[j],
                    p.halfwidth3s[j],
                    self.n_replicas,
                ));
            }
        }
        Table { key: "t", rows }
    }
}

/// Random initial pairs for the configured system: normal coordinates of
/// standard deviation `pair_scale` (toy), or smooth fields of norm
/// `pair_scale` (SPDE), in the vector scaling of the temperature norm.
pub fn random_pairs(cfg: &StudyConfig) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let c = &cfg.contraction;
    let root = make_stream(cfg.seed, CONTRACTION_TAG).child(u64::MAX);
    let model = Model::from_config(cfg)?;
    (0..c.n_pairs)
        .map(|k| {
            let s = root.child(k as u64);
            match cfg.system {
                SystemChoice::Toy => {
                    let m2 = cfg.toy.as_ref().map(|t| t.m2).unwrap_or(0);
                    let f = |v: Vec<f64>| {
                        v.into_iter()
                            .map(|x| x * c.pair_scale)
                            .collect::<Vec<f64>>()
                    };
                    Ok((f(s.child(0).normals(m2)), f(s.child(1).normals(m2))))
                }
                SystemChoice::Spde => {
                    let grid = model
                        .grid()
                        .ok_or_else(|| Error::Config("spde: missing".into()))?;
                    let a = random_field(&grid, 24, c.pair_scale, &s.child(0))?;
                    let b = random_field(&grid, 24, c.pair_scale, &s.child(1))?;
                    let v = |f: crate::spectral::ThetaField| {
                        let w = (grid.dx() * grid.dz()).sqrt();
                        f.values.iter().map(|x| x * w).collect::<Vec<f64>>()
                    };
                    Ok((v(a), v(b)))
                }
            }
        })
        .collect()
}

/// Limit system only. For each pair and replica both temperatures are driven
/// by the same noise; the coupled mean cost at each `t` over the initial cost
/// bounds the contraction factor of the transport distance from above.
pub fn run_contraction_study(
    cfg: &StudyConfig,
    theta_pairs: &[(Vec<f64>, Vec<f64>)],
    t_grid: &[f64],
) -> Result<ContractionReport> {
    cfg.validate()?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 0.0 {
        return Err(Error::Config(
            "contraction: t_grid must be non-empty, non-negative and increasing".into(),
        ));
    }
    let clock = start_clock();
    let model = Model::from_config(cfg)?;
    let root = make_stream(cfg.seed, CONTRACTION_TAG);
    let record: Vec<usize> = t_grid.iter().map(|t| model.steps(*t)).collect();
    if record.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "contraction: t_grid spacing is below dt".into(),
        ));
    }
    let gm = cfg.metric;
    let mut pairs = Vec::with_capacity(theta_pairs.len());
    for (k, (a, b)) in theta_pairs.iter().enumerate() {
        let sa = model.start_at(a)?;
        let sb = model.start_at(b)?;
        let rho0 = ground_cost(&model.theta_vector(&sa), &model.theta_vector(&sb), &gm);
        let runs = map_indexed(cfg.n_replicas, |i| -> Result<Vec<f64>> {
            let th = model.run(
                &[(Sys::Limit, &sa), (Sys::Limit, &sb)],
                &root.child(k as u64).child(i as u64),
                &record,
            )?;
            Ok(th.iter().map(|c| ground_cost(&c[0], &c[1], &gm)).collect())
        })
        .into_iter()
        .collect::<Result<Vec<Vec<f64>>>>()?;
        let (mut ratio, mut hw) = (Vec::new(), Vec::new());
        for j in 0..t_grid.len() {
            let col: Vec<f64> = runs.iter().map(|r| r[j]).collect();
            if rho0 == 0.0 {
                ratio.push(0.0);
                hw.push(0.0);
            } else {
                let (m, se) = mean_and_stderr(&col);
                ratio.push(m / rho0);
                hw.push(3.0 * se / rho0);
            }
        }
        let certificate_t = (0..t_grid.len())
            .find(|&j| ratio[j] + hw[j] < 1.0 - 1e-9)
            .map(|j| t_grid[j]);
        pairs.push(PairCurve {
            rho0,
            t_grid: t_grid.to_vec(),
            ratio,
            halfwidth3s: hw,
            certificate_t,
        });
    }
    Ok(ContractionReport {
        system: cfg.system,
        eta: gm.eta,
        n_replicas: cfg.n_replicas,
        pairs,
        seeds: vec![
            SeedEntry::new("pair root (child k, then replica i)", &root),
            SeedEntry::new("random pairs", &root.child(u64::MAX)),
        ],
        wall_clock_s: elapsed(clock),
    })
}
