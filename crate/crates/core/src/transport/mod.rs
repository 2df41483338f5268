//! Empirical measures, the weighted ground metric `rho_eta`, exact optimal
//! transport between small clouds, and the Monte Carlo tail / shell estimators.

mod estimators;
mod measure;
mod metric;
mod ot;

pub use estimators::{
    empirical_lipschitz, exp_moment_tail, observable_gap, shell_partitioned_moment, Observable,
    ShellEstimate, ShellRow, ShippedObservable, TailRow,
};
pub use measure::EmpiricalMeasure;
pub use metric::{ground_cost, rho_eta_point, GroundMetric, MetricMode, RhoValue};
pub use ot::{
    coupled_upper_bound, coupled_upper_bound_with_error, transport_plan, wasserstein, EXACT_LIMIT,
};
