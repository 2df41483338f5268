use serde::{Deserialize, Serialize};

use super::config::{StudyConfig, SystemChoice};
use super::model::{random_field, scale, Model, Start, Sys};
use super::{elapsed, start_clock, Row, SeedEntry, Table};
use crate::numerics::{make_stream, mean_and_stderr, norm, IncrementSource};
use crate::par::map_indexed;
use crate::spectral::{
    damping_threshold, forcing_basis, stokes_solve, Grid2D, LinearStepper, SpdeParams, SpdeStepper,
};
use crate::{Error, Result};

const CONTROL_TAG: u64 = 0x43_54;
const IRREDUCIBILITY_TAG: u64 = 0x49_52;

/// Laplacian eigenvalue of the `n`-th forcing mode, `lambda_n`.
pub(crate) fn lambda_n(grid: &Grid2D, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("lambda_n needs n >= 1"));
    }
    Ok(forcing_basis(grid, n)?.eigenvalues[n - 1])
}

/// One `(lambda, n_proj)` setting of the control study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCell {
    pub lambda: f64,
    pub n_proj: usize,
    /// `ln(|rho(t/2)| / |rho(t)|) / (t/2)`, averaged over paths.
    pub rate: f64,
    pub rate_halfwidth3s: f64,
    /// Mean of `|rho(t)|` for unit `|xi|`.
    pub final_norm: f64,
    pub final_norm_halfwidth3s: f64,
    pub max_final_norm: f64,
    /// Fraction of paths with `|rho(t)| <= threshold`.
    pub fraction_decayed: f64,
    pub cost: f64,
    pub cost_halfwidth3s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub t: f64,
    pub n_paths: usize,
    pub threshold: f64,
    pub cells: Vec<ControlCell>,
    /// Smallest `n_proj` at which every path decayed below the threshold.
    pub uniform_from: Option<usize>,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_s: f64,
}

impl ControlReport {
    pub fn cell(&self, n_proj: usize) -> Option<&ControlCell> {
        self.cells.iter().find(|c| c.n_proj == n_proj)
    }

    pub fn table(&self) -> Table {
        let mut rows = Vec::new();
        let n = self.n_paths;
        for c in &self.cells {
            let tag = |m: &str| format!("{m}_lambda{}", c.lambda);
            rows.push(Row::new(
                c.n_proj as f64,
                tag("rate"),
                c.rate,
                c.rate_halfwidth3s,
                n,
            ));
            rows.push(Row::new(
                c.n_proj as f64,
                tag("final_norm"),
                c.final_norm,
                c.final_norm_halfwidth3s,
                n,
            ));
            let p = c.fraction_decayed;
            rows.push(Row::new(
                c.n_proj as f64,
                tag("fraction_decayed"),
                p,
                3.0 * (p * (1.0 - p) / n as f64).sqrt(),
                n,
            ));
            rows.push(Row::new(
                c.n_proj as f64,
                tag("cost"),
                c.cost,
                c.cost_halfwidth3s,
                n,
            ));
        }
        Table {
            key: "n_proj",
            rows,
        }
    }
}

struct PathResult {
    rate: Vec<f64>,
    final_norm: Vec<f64>,
    cost: Vec<f64>,
}

fn spde_parts(
    cfg: &StudyConfig,
    model: &Model,
) -> Result<(SpdeParams, crate::spectral::ForcingSet, f64)> {
    cfg.require(SystemChoice::Spde)?;
    match model {
        Model::Spde {
            params,
            forcing,
            sigma_scale,
            ..
        } => Ok((*params, forcing.clone(), *sigma_scale)),
        Model::Toy { .. } => Err(Error::Config("system: this study needs Spde".into())),
    }
}

/// Limit-system base trajectories from burned-in data drive the linearized
/// equation with `-lambda P_N rho` damping, from a random unit `xi`; every
/// `(lambda, n_proj)` cell shares the base path and `xi` of path `i`.
pub fn run_control_study(
    cfg: &StudyConfig,
    lambda_grid: &[f64],
    n_proj_grid: &[usize],
) -> Result<ControlReport> {
    cfg.validate()?;
    let clock = start_clock();
    let model = Model::from_config(cfg)?;
    let (params, forcing, sigma_scale) = spde_parts(cfg, &model)?;
    let grid = forcing.grid;
    if n_proj_grid.is_empty() {
        return Err(Error::Config(
            "control: n_proj_grid must not be empty".into(),
        ));
    }
    let mut cells: Vec<(f64, usize)> = Vec::new();
    if lambda_grid.is_empty() {
        for &n in n_proj_grid {
            cells.push((lambda_n(&grid, n)?, n));
        }
    } else {
        for &l in lambda_grid {
            for &n in n_proj_grid {
                cells.push((l, n));
            }
        }
    }
    let dt = model.dt();
    let n_half = model.steps(cfg.t / 2.0).max(1);
    let n = (2 * n_half).max(model.steps(cfg.t));
    let half_t = n_half as f64 * dt;
    let root = make_stream(cfg.seed, CONTROL_TAG);
    let paths = map_indexed(cfg.control.n_paths, |i| -> Result<PathResult> {
        let rs = root.child(i as u64);
        let Start::Spde { theta, .. } = model.burn_in(0.0, cfg.burn_in(), &rs.child(0))? else {
            unreachable!("SPDE model yields field states")
        };
        let xi = random_field(&grid, 24, 1.0, &rs.child(2))?;
        let mut base = SpdeStepper::limit(&params, &forcing, &theta, dt)?;
        let mut lins = cells
            .iter()
            .map(|&(lambda, n_proj)| {
                let p = SpdeParams {
                    lambda_damp: lambda,
                    n_proj,
                    ..params
                };
                LinearStepper::new(&p, &xi, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut src = IncrementSource::new(&rs.child(1), dt, forcing.n())?;
        let mut dw = vec![0.0; forcing.n()];
        let mut cost = vec![0.0; cells.len()];
        let mut mid = vec![0.0; cells.len()];
        for k in 1..=n {
            for (c, lin) in cost.iter_mut().zip(lins.iter_mut()) {
                *c += lin.step_on(&base)?;
            }
            src.next_into(&mut dw);
            scale(&mut dw, sigma_scale);
            base.step(&dw)?;
            if k == n_half {
                for (m, lin) in mid.iter_mut().zip(&lins) {
                    *m = lin.rho_norm();
                }
            }
        }
        let final_norm: Vec<f64> = lins.iter().map(|l| l.rho_norm()).collect();
        let rate = mid
            .iter()
            .zip(&final_norm)
            .map(|(a, b)| (a / b).ln() / (n as f64 * dt - half_t))
            .collect();
        Ok(PathResult {
            rate,
            final_norm,
            cost,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let np = paths.len();
    let mut out = Vec::with_capacity(cells.len());
    for (j, &(lambda, n_proj)) in cells.iter().enumerate() {
        let col = |f: &dyn Fn(&PathResult) -> f64| paths.iter().map(f).collect::<Vec<f64>>();
        let rate = col(&|p| p.rate[j]);
        let fin = col(&|p| p.final_norm[j]);
        let cost = col(&|p| p.cost[j]);
        let (rm, rs) = mean_and_stderr(&rate);
        let (fm, fs) = mean_and_stderr(&fin);
        let (cm, cs) = mean_and_stderr(&cost);
        out.push(ControlCell {
            lambda,
            n_proj,
            rate: rm,
            rate_halfwidth3s: 3.0 * rs,
            final_norm: fm,
            final_norm_halfwidth3s: 3.0 * fs,
            max_final_norm: fin.iter().cloned().fold(0.0, f64::max),
            fraction_decayed: fin.iter().filter(|v| **v <= cfg.control.threshold).count() as f64
                / np as f64,
            cost: cm,
            cost_halfwidth3s: 3.0 * cs,
        });
    }
    let uniform_from = out
        .iter()
        .filter(|c| c.fraction_decayed == 1.0)
        .map(|c| c.n_proj)
        .min();
    Ok(ControlReport {
        t: n as f64 * dt,
        n_paths: np,
        threshold: cfg.control.threshold,
        cells: out,
        uniform_from,
        seeds: vec![SeedEntry::new(
            "path root (child i: burn-in 0, noise 1, xi 2)",
            &root,
        )],
        wall_clock_s: elapsed(clock),
    })
}

/// Hitting fraction with its 3 sigma binomial half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub hits: usize,
    pub n: usize,
    pub fraction: f64,
    pub halfwidth3s: f64,
}

impl Fraction {
    fn new(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            hits,
            n,
            fraction: p,
            halfwidth3s: 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub m: f64,
    pub delta: f64,
    pub t: f64,
    pub n_proj: usize,
    pub lambda_damp: f64,
    /// `max{2 Ra (Ra~ + 1), 1}`, the level `lambda_N` must reach.
    pub damping_threshold: f64,
    pub undamped: Fraction,
    pub damped: Fraction,
    pub seeds: Vec<SeedEntry>,
    pub wall_clock_s: f64,
}

impl IrreducibilityReport {
    pub fn table(&self) -> Table {
        let row = |name: &str, f: &Fraction| Row::new(self.m, name, f.fraction, f.halfwidth3s, f.n);
        Table {
            key: "m",
            rows: vec![
                row("undamped_fraction", &self.undamped),
                row("damped_fraction", &self.damped),
            ],
        }
    }
}

/// From smooth random data on the sphere `|theta_0| = m`, the fraction of
/// noise paths with `|theta(t)| < delta`, for the infinite-Prandtl system and
/// for its damped variant on the same paths.
pub fn run_irreducibility_study(
    cfg: &StudyConfig,
    m: f64,
    delta: f64,
    t: f64,
    n_paths: usize,
) -> Result<IrreducibilityReport> {
    cfg.validate()?;
    if !(m >= 0.0) || !(delta > 0.0) || !(t > 0.0) || n_paths == 0 {
        return Err(Error::Config(
            "irreducibility: need m >= 0, delta > 0, t > 0, n_paths >= 1".into(),
        ));
    }
    let clock = start_clock();
    let model = Model::from_config(cfg)?;
    let (params, forcing, _) = spde_parts(cfg, &model)?;
    let grid = forcing.grid;
    let threshold = damping_threshold(params.ra, params.ratilde);
    let n_proj = match cfg.irreducibility.n_proj {
        Some(n) => n,
        None => {
            let mut n = 1;
            while lambda_n(&grid, n)? < threshold {
                n += 1;
                if n > crate::spectral::available_modes(&grid) {
                    return Err(Error::Config(
                        "irreducibility: grid too coarse for the damping threshold".into(),
                    ));
                }
            }
            n
        }
    };
    let lambda = match cfg.irreducibility.lambda_damp {
        Some(l) => l,
        None => lambda_n(&grid, n_proj)?,
    };
    let root = make_stream(cfg.seed, IRREDUCIBILITY_TAG);
    let steps = model.steps(t).max(1);
    let hits = map_indexed(n_paths, |i| -> Result<(bool, bool)> {
        let rs = root.child(i as u64);
        let theta = random_field(&grid, 24, m, &rs.child(0))?;
        let u = stokes_solve(&grid, &theta, params.ra)?;
        let s = Start::Spde { theta, u };
        let th = model.run(
            &[(Sys::Limit, &s), (Sys::Damped { lambda, n_proj }, &s)],
            &rs.child(1),
            &[steps],
        )?;
        Ok((norm(&th[0][0]) < delta, norm(&th[0][1]) < delta))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(IrreducibilityReport {
        m,
        delta,
        t: steps as f64 * model.dt(),
        n_proj,
        lambda_damp: lambda,
        damping_threshold: threshold,
        undamped: Fraction::new(hits.iter().filter(|h| h.0).count(), n_paths),
        damped: Fraction::new(hits.iter().filter(|h| h.1).count(), n_paths),
        seeds: vec![SeedEntry::new(
            "path root (child i: initial data 0, noise 1)",
            &root,
        )],
        wall_clock_s: elapsed(clock),
    })
}
