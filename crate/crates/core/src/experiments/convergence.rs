use super::config::StudyConfig;
use super::model::{Model, Start, Sys};
use super::{elapsed, start_clock, ConvergenceReport, Estimate, SeedEntry};
use crate::numerics::{dist, make_stream, mean_and_stderr};
use crate::par::map_indexed;
use crate::transport::{ground_cost, wasserstein, EmpiricalMeasure, GroundMetric, EXACT_LIMIT};
use crate::Result;

const FINITE_TIME_TAG: u64 = 0x46_54;
const INVARIANT_TAG: u64 = 0x49_4e;

struct Gaps {
    full: f64,
    eps_corrector: f64,
    corrector_limit: f64,
    rho: f64,
}

/// For each eps: replicas start from a burned-in state of the eps-system and
/// run the eps-system, the corrector and the limit on one noise path up to
/// `cfg.t`. Replica `i` uses the same streams for every eps.
///
/// Metrics: `l1`, `l2`, `delta` are `E|theta^eps - theta^0|^p` for
/// `p = 1, 2, cfg.delta`; `rho_upper` is the mean chord cost of the coupled
/// pair; `eps_corrector`, `corrector_limit` and `corrector_limit_sq` are the
/// partial gaps.
pub fn run_finite_time_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    cfg.require_eps_grid()?;
    let clock = start_clock();
    let model = Model::from_config(cfg)?;
    let root = make_stream(cfg.seed, FINITE_TIME_TAG);
    let n = model.steps(cfg.t).max(1);
    let mut estimates = Vec::new();
    for &eps in &cfg.eps_grid {
        let gaps = map_indexed(cfg.n_replicas, |i| -> Result<Gaps> {
            let rs = root.child(i as u64);
            let s0 = model.burn_in(eps, cfg.burn_in(), &rs.child(0))?;
            let jobs = [
                (Sys::Eps(eps), &s0),
                (Sys::Corrector(eps), &s0),
                (Sys::Limit, &s0),
            ];
            let th = model
                .run(&jobs, &rs.child(1), &[n])?
                .pop()
                .unwrap_or_default();
            let (e, c, l) = (&th[0], &th[1], &th[2]);
            Ok(Gaps {
                full: dist(e, l),
                eps_corrector: dist(e, c),
                corrector_limit: dist(c, l),
                rho: ground_cost(e, l, &cfg.metric),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let col = |f: &dyn Fn(&Gaps) -> f64| gaps.iter().map(f).collect::<Vec<f64>>();
        let d = cfg.delta;
        estimates.push(Estimate::from_samples(eps, "l1", &col(&|g| g.full)));
        estimates.push(Estimate::from_samples(
            eps,
            "l2",
            &col(&|g| g.full * g.full),
        ));
        estimates.push(Estimate::from_samples(
            eps,
            "delta",
            &col(&|g| g.full.powf(d)),
        ));
        estimates.push(Estimate::from_samples(eps, "rho_upper", &col(&|g| g.rho)));
        estimates.push(Estimate::from_samples(
            eps,
            "eps_corrector",
            &col(&|g| g.eps_corrector),
        ));
        estimates.push(Estimate::from_samples(
            eps,
            "corrector_limit",
            &col(&|g| g.corrector_limit),
        ));
        estimates.push(Estimate::from_samples(
            eps,
            "corrector_limit_sq",
            &col(&|g| g.corrector_limit * g.corrector_limit),
        ));
    }
    let mut report = ConvergenceReport {
        study: "finite_time".into(),
        system: cfg.system,
        eps_grid: cfg.eps_grid.clone(),
        estimates,
        fits: Vec::new(),
        seeds: vec![
            SeedEntry::new("replica root (child i: burn-in 0, path 1)", &root),
            instance_seed(cfg),
        ],
        wall_clock_s: 0.0,
    };
    report.fit_all();
    report.wall_clock_s = elapsed(clock);
    Ok(report)
}

fn instance_seed(cfg: &StudyConfig) -> SeedEntry {
    let s = cfg.toy.as_ref().map(|t| t.instance_seed).unwrap_or(0);
    SeedEntry::new("toy instance", &make_stream(s, 0))
}

/// Stationary clouds per eps and for the limit, all burned in on the same
/// replica streams. Metrics: `wasserstein` (exact transport of the
/// temperature marginals under `cfg.metric`, at most 512 points, with a
/// batch-means half-width), `wasserstein_l2` (the same with the Euclidean
/// cost) and `coupled_gap` (eps-system and limit from the eps-stationary
/// state, shared noise up to `t_star`, mean chord cost).
pub fn run_invariant_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    cfg.require_eps_grid()?;
    let clock = start_clock();
    let model = Model::from_config(cfg)?;
    let root = make_stream(cfg.seed, INVARIANT_TAG);
    let n = cfg.n_replicas;
    let cloud = |eps: f64| -> Result<Vec<Start>> {
        map_indexed(n, |i| {
            model.burn_in(eps, cfg.burn_in(), &root.child(i as u64).child(0))
        })
        .into_iter()
        .collect()
    };
    let limit: Vec<Vec<f64>> = cloud(0.0)?.iter().map(|s| model.theta_vector(s)).collect();
    let steps = model.steps(cfg.invariant.t_star).max(1);
    let mut estimates = Vec::new();
    for &eps in &cfg.eps_grid {
        let starts = cloud(eps)?;
        let thetas: Vec<Vec<f64>> = starts.iter().map(|s| model.theta_vector(s)).collect();
        for (name, gm) in [
            ("wasserstein", cfg.metric),
            ("wasserstein_l2", GroundMetric::l2()),
        ] {
            let (w, hw, used) = batched_wasserstein(&thetas, &limit, &gm, cfg.invariant.batches)?;
            estimates.push(Estimate::new(eps, name, w, hw, used));
        }
        let costs = map_indexed(n, |i| -> Result<f64> {
            let jobs = [(Sys::Eps(eps), &starts[i]), (Sys::Limit, &starts[i])];
            let th = model.run(&jobs, &root.child(i as u64).child(1), &[steps])?;
            Ok(ground_cost(&th[0][0], &th[0][1], &cfg.metric))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        estimates.push(Estimate::from_samples(eps, "coupled_gap", &costs));
    }
    let mut report = ConvergenceReport {
        study: "invariant".into(),
        system: cfg.system,
        eps_grid: cfg.eps_grid.clone(),
        estimates,
        fits: Vec::new(),
        seeds: vec![
            SeedEntry::new("replica root (child i: burn-in 0, coupling 1)", &root),
            instance_seed(cfg),
        ],
        wall_clock_s: 0.0,
    };
    report.fit_all();
    report.wall_clock_s = elapsed(clock);
    Ok(report)
}

/// Exact transport between the first `min(n, 512)` points of each cloud, and
/// `3 sd / sqrt(B)` over `B` disjoint batches as its half-width.
fn batched_wasserstein(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    gm: &GroundMetric,
    batches: usize,
) -> Result<(f64, f64, usize)> {
    let n = a.len().min(b.len()).min(EXACT_LIMIT);
    let full = wasserstein(
        &EmpiricalMeasure::from_points(&a[..n])?,
        &EmpiricalMeasure::from_points(&b[..n])?,
        gm,
    )?;
    let size = n / batches;
    if size < 2 {
        return Ok((full, f64::INFINITY, n));
    }
    let per: Vec<f64> = (0..batches)
        .map(|k| {
            let r = k * size..(k + 1) * size;
            wasserstein(
                &EmpiricalMeasure::from_points(&a[r.clone()])?,
                &EmpiricalMeasure::from_points(&b[r])?,
                gm,
            )
        })
        .collect::<Result<_>>()?;
    let (_, se) = mean_and_stderr(&per);
    Ok((full, 3.0 * se, n))
}
