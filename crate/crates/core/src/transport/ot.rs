use crate::numerics::{mean_and_stderr, pairwise_sum};
use crate::par::map_indexed;
use crate::{Error, Result};

use super::measure::EmpiricalMeasure;
use super::metric::{ground_cost, GroundMetric};

/// Largest support size accepted by the exact solver.
pub const EXACT_LIMIT: usize = 512;

/// Masses below this are treated as exhausted.
const MASS_TOL: f64 = 1e-14;

/// Optimal cost and the nonzero entries `(i, j, mass)` of an optimal plan.
pub fn transport_plan(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    gm: &GroundMetric,
) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let size = mu.len().max(nu.len());
    if size > EXACT_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: EXACT_LIMIT,
        });
    }
    let (n, m) = (mu.len(), nu.len());
    let rows = map_indexed(n, |i| {
        let x = mu.sample(i);
        (0..m)
            .map(|j| ground_cost(x, nu.sample(j), gm))
            .collect::<Vec<_>>()
    });
    let cost: Vec<f64> = rows.concat();
    if let Some(bad) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("ground cost {bad}")));
    }
    let flow = min_cost_flow(&cost, mu.weights(), nu.weights());
    let mut plan = Vec::new();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > 0.0 {
                plan.push((i, j, f));
                terms.push(f * cost[i * m + j]);
            }
        }
    }
    Ok((pairwise_sum(&terms), plan))
}

pub fn wasserstein(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, gm: &GroundMetric) -> Result<f64> {
    transport_plan(mu, nu, gm).map(|(c, _)| c)
}

/// Successive shortest paths on the complete bipartite graph with node
/// potentials. Forward arcs are uncapacitated; reverse arcs carry the current flow.
fn min_cost_flow(cost: &[f64], supply: &[f64], demand: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    let v = n + m;
    let mut flow = vec![0.0; n * m];
    let mut sup = supply.to_vec();
    let mut dem = demand.to_vec();
    // Column potentials start at the cheapest incoming cost so reduced costs are >= 0.
    let mut pot = vec![0.0; v];
    for j in 0..m {
        pot[n + j] = (0..n)
            .map(|i| cost[i * m + j])
            .fold(f64::INFINITY, f64::min);
    }
    let mut dist = vec![0.0; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];

    loop {
        let remaining: f64 = sup.iter().sum();
        if remaining <= MASS_TOL * n as f64 || dem.iter().all(|d| *d <= MASS_TOL) {
            break;
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if sup[i] > MASS_TOL {
                dist[i] = 0.0;
            }
        }
        let mut target = usize::MAX;
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for (k, (&d, &f)) in dist.iter().zip(&done).enumerate() {
                if !f && d < bd {
                    bd = d;
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best >= n {
                let j = best - n;
                if dem[j] > MASS_TOL {
                    target = best;
                    break;
                }
                for i in 0..n {
                    if flow[i * m + j] > 0.0 && !done[i] {
                        let rc = (-cost[i * m + j] + pot[best] - pot[i]).max(0.0);
                        if bd + rc < dist[i] {
                            dist[i] = bd + rc;
                            prev[i] = best;
                        }
                    }
                }
            } else {
                let i = best;
                for j in 0..m {
                    let node = n + j;
                    if !done[node] {
                        let rc = (cost[i * m + j] + pot[i] - pot[node]).max(0.0);
                        if bd + rc < dist[node] {
                            dist[node] = bd + rc;
                            prev[node] = i;
                        }
                    }
                }
            }
        }
        if target == usize::MAX {
            break;
        }
        let dt = dist[target];
        for k in 0..v {
            pot[k] += dist[k].min(dt);
        }
        // Bottleneck along the path.
        let mut delta = dem[target - n];
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node < n {
                // reverse arc column p -> row node
                delta = delta.min(flow[node * m + (p - n)]);
            }
            node = p;
        }
        delta = delta.min(sup[node]);
        let source = node;
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if node >= n {
                flow[p * m + (node - n)] += delta;
            } else {
                let e = node * m + (p - n);
                flow[e] -= delta;
                if flow[e] < MASS_TOL {
                    flow[e] = 0.0;
                }
            }
            node = p;
        }
        sup[source] -= delta;
        if sup[source] < MASS_TOL {
            sup[source] = 0.0;
        }
        dem[target - n] -= delta;
        if dem[target - n] < MASS_TOL {
            dem[target - n] = 0.0;
        }
    }
    flow
}

fn check_paired(x: &EmpiricalMeasure, y: &EmpiricalMeasure) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("coupled estimate needs at least one pair"));
    }
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.len() * x.dim(),
            found: y.len() * y.dim(),
        });
    }
    Ok(())
}

/// Mean ground cost over index-paired samples: the cost of one particular
/// coupling, hence an upper bound on the transport distance. Pairs are
/// weighted by `x`'s weights.
pub fn coupled_upper_bound(
    x: &EmpiricalMeasure,
    y: &EmpiricalMeasure,
    gm: &GroundMetric,
) -> Result<f64> {
    check_paired(x, y)?;
    let terms = map_indexed(x.len(), |i| {
        x.weights()[i] * ground_cost(x.sample(i), y.sample(i), gm)
    });
    Ok(pairwise_sum(&terms))
}

/// Equal-weight version returning `(mean, 3 * standard error)`.
pub fn coupled_upper_bound_with_error(
    x: &EmpiricalMeasure,
    y: &EmpiricalMeasure,
    gm: &GroundMetric,
) -> Result<(f64, f64)> {
    check_paired(x, y)?;
    let costs = map_indexed(x.len(), |i| ground_cost(x.sample(i), y.sample(i), gm));
    let (m, se) = mean_and_stderr(&costs);
    Ok((m, if se.is_finite() { 3.0 * se } else { 0.0 }))
}
