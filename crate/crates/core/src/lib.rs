//! Simulation and diffusion-approximation toolkit for the single-server
//! queue with customer abandonment (GI/GI/1+GI) in heavy traffic.
//!
//! The crate is organized bottom-up:
//!
//! - [`primitives`]: unit-mean input laws, heavy-traffic rates, patience families and assumption checks.
//! - [`simulator`]: exact event-driven simulation of the offered waiting time with time-weighted statistics.
//! - [`scaling`]: the capped dominating patience family, its coupling, and growth checks.
//! - [`diffusion`]: stationary law of the limiting reflected diffusion, plus an Euler scheme cross-check.
//! - [`harness`]: experiment configuration, convergence reports, plots and the CLI driver.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod primitives;
pub mod scaling;
pub mod simulator;

pub use error::{Error, Result};
