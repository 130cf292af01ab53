//! Diagnostic checks of the model assumptions on a configured system.

use serde::{Deserialize, Serialize};

use super::function::ScalarFn;
use super::patience::PatienceFamily;
use super::spec::{HeavyTrafficParams, Primitive};
use crate::error::{Error, Result};

/// Slack allowed for grid noise when judging an error sequence monotone.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Moment condition on the inter-arrival and service laws: `p > 2` and
/// `E[u^p], E[v^p] < inf`.
pub fn check_moment_condition(u: &Primitive, v: &Primitive, p: f64) -> Result<()> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::Validation(format!("moment order p = {p} must lie in (2, inf)")));
    }
    for (name, prim) in [("inter-arrival", u), ("service", v)] {
        if !prim.has_finite_moment(p) {
            return Err(Error::Validation(format!("{name} law {:?} has infinite {p}-th moment", prim.spec())));
        }
    }
    Ok(())
}

/// Whether the inter-arrival law has unbounded support. A bounded law only
/// produces a warning: the simulator is well defined either way.
pub fn check_unbounded_interarrival(u: &Primitive) -> Option<String> {
    if u.unbounded_support() {
        None
    } else {
        Some(format!("inter-arrival law {:?} has bounded support", u.spec()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A3Row {
    pub n: u64,
    pub sup_error: f64,
    pub argmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A3Report {
    pub k: f64,
    pub rows: Vec<A3Row>,
    /// Errors non-increasing along `n` (up to [`MONOTONE_SLACK`]).
    pub non_increasing: bool,
    /// Errors strictly decreasing along `n`.
    pub strictly_decreasing: bool,
}

/// Sup over an equispaced grid on `[0, k]` of `|sqrt(n) F^n(x/sqrt(n)) - H(x)|`,
/// for each `n` in `n_list`.
pub fn check_a3(fam: &PatienceFamily, k: f64, n_list: &[u64], grid_intervals: usize) -> Result<A3Report> {
    if !(k > 0.0) {
        return Err(Error::config("check_a3 needs K > 0"));
    }
    let grid_intervals = grid_intervals.max(1);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut sup_error = 0.0;
        let mut argmax = 0.0;
        for i in 0..=grid_intervals {
            let x = k * i as f64 / grid_intervals as f64;
            let err = (fam.scaled_cdf(n, x)? - fam.limit().eval(x)).abs();
            if err > sup_error {
                sup_error = err;
                argmax = x;
            }
        }
        rows.push(A3Row { n, sup_error, argmax });
    }
    let non_increasing = rows.windows(2).all(|w| w[1].sup_error <= w[0].sup_error + MONOTONE_SLACK);
    let strictly_decreasing = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    Ok(A3Report { k, rows, non_increasing, strictly_decreasing })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A4Report {
    pub holds: bool,
    /// `H(x_max) - theta / lambda`.
    pub margin: f64,
    pub x_max: f64,
}

/// Finite-horizon proxy for `lim H(x) > theta / lambda`: evaluates `H(x_max)`.
pub fn check_a4(limit: &ScalarFn, params: &HeavyTrafficParams, x_max: f64) -> A4Report {
    let margin = limit.eval(x_max) - params.drift();
    A4Report { holds: margin > 0.0, margin, x_max }
}
