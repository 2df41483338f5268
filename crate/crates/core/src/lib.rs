//! Numerical laboratory for the large-Prandtl-number limit of stochastically
//! forced convection.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: keyed random streams, Brownian paths, small dense linear algebra.
//! * [`toy`]: the finite-dimensional slow/fast toy system, its formal limit and the corrector.
//! * [`sde`]: time stepping for the toy systems with shared-noise coupling.
//! * [`spectral`]: a 2D Fourier/finite-difference Boussinesq solver and its infinite-Prandtl limit.
//! * [`transport`]: empirical measures, the weighted ground metric and exact optimal transport.
//! * [`experiments`]: the convergence, contraction, control and irreducibility studies.
//! * [`report`]: study configuration files, CSV/JSON outputs and run manifests.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the component formulas in the numerical kernels.
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod error;
pub mod experiments;
pub mod numerics;
pub mod report;
pub mod sde;
pub mod spectral;
pub mod toy;
pub mod transport;

mod par;

pub use error::{Error, Result};
