//! Limiting reflected diffusion: stationary law by quadrature and an Euler
//! path simulator used as an independent cross-check.

mod model;
mod sde;
mod stationary;

pub use model::DiffusionModel;
pub use sde::{simulate_sde, simulate_sde_replications, SdeConfig, SdeResult, DEFAULT_SDE_DT};
pub use stationary::{build_stationary, DiffusionStationary, StationarySummary, CDF_TOL, DEFAULT_TOL, X_SEARCH_LIMIT};
