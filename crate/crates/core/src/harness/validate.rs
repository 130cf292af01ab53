use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::primitives::{
    check_a3, check_a4, check_moment_condition, check_unbounded_interarrival, A3Report, A4Report, PatienceFamily,
    Primitive,
};
use crate::scaling::{check_growth, DominatingFamily, GrowthReport};

/// Outcome of the assumption checks, recorded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub moment_p: f64,
    pub a3: A3Report,
    pub a4: A4Report,
    /// `None` when the inter-arrival law has unbounded support.
    pub a5_issue: Option<String>,
    pub a5_waived: bool,
    pub growth: Option<GrowthReport>,
    /// `theta/lambda + sigma_bar` of the dominating system, with `sigma_bar`
    /// from the config or half the stability margin. `None` when the default
    /// cap would not be positive.
    pub dominating_cap: Option<f64>,
    pub warnings: Vec<String>,
}

/// Validated inputs ready for simulation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub interarrival: Primitive,
    pub service: Primitive,
    pub patience: PatienceFamily,
    pub report: ValidationReport,
}

/// Runs every check in order and stops at the first hard failure.
/// Configuration and assumption failures are [`Error::Config`] or
/// [`Error::Validation`]; a non-positive stability margin is [`Error::Stability`].
pub fn validate_experiment(cfg: &ExperimentConfig, waive_a5: bool) -> Result<Prepared> {
    cfg.check_structure()?;
    let interarrival = cfg.interarrival()?;
    let service = cfg.service()?;
    check_moment_condition(&interarrival, &service, cfg.moment_p)?;
    let patience = cfg.patience()?;
    let v = &cfg.validation;

    let a3 = check_a3(&patience, v.a3_k, &cfg.n_grid, v.grid_intervals)?;
    if !a3.non_increasing {
        return Err(Error::Validation(format!(
            "sup-errors of sqrt(n) F^n(x/sqrt(n)) - H(x) on [0, {}] increase along n_grid: {:?}",
            v.a3_k,
            a3.rows.iter().map(|r| r.sup_error).collect::<Vec<_>>()
        )));
    }

    let a4 = check_a4(patience.limit(), &cfg.params(cfg.n_grid[0]), v.a4_x_max);
    if !a4.holds {
        return Err(Error::Stability(format!("H({}) - theta/lambda = {} is not positive", a4.x_max, a4.margin)));
    }

    let mut warnings = Vec::new();
    for &m in &cfg.moment_orders {
        if m >= cfg.moment_p - 1.0 {
            warnings.push(format!(
                "moment order {m} is not below p - 1 = {}; moment convergence is not covered",
                cfg.moment_p - 1.0
            ));
        }
    }
    let params = cfg.params(cfg.n_grid[0]);
    let dominating_cap = match cfg.sigma_bar {
        Some(s) => Some(DominatingFamily::new(patience.clone(), &params, s)?.cap_level()),
        None => match DominatingFamily::with_default_cap(patience.clone(), &params, v.a4_x_max) {
            Ok(d) => Some(d.cap_level()),
            Err(e) => {
                warnings.push(format!("no default dominating family: {e}"));
                None
            }
        },
    };
    let a5_issue = check_unbounded_interarrival(&interarrival);
    let a5_waived = waive_a5 || cfg.waive_a5;
    if let Some(issue) = &a5_issue {
        if a5_waived {
            warnings.push(format!("waived: {issue}"));
        } else {
            return Err(Error::Validation(format!("{issue} (pass --waive-a5 to run anyway)")));
        }
    }

    let growth = match patience.growth() {
        Some(g) => {
            if !(g.m < cfg.moment_p - 1.0) {
                return Err(Error::Validation(format!(
                    "growth exponent m = {} must be below p - 1 = {}",
                    g.m,
                    cfg.moment_p - 1.0
                )));
            }
            let r = check_growth(&patience, g.c, g.m, &cfg.n_grid, v.growth_x_max, v.grid_intervals)?;
            if !r.holds {
                return Err(Error::Validation(format!(
                    "growth bound sqrt(n) F^n(x/sqrt(n)) <= {} (1 + x^{}) fails at (n, x) = {:?}",
                    g.c, g.m, r.witness
                )));
            }
            Some(r)
        }
        None => None,
    };
    if !a3.strictly_decreasing && a3.rows.iter().any(|r| r.sup_error > 0.0) {
        warnings.push("A3 sup-errors are non-increasing but not strictly decreasing along n_grid".into());
    }

    Ok(Prepared {
        interarrival,
        service,
        patience,
        report: ValidationReport {
            moment_p: cfg.moment_p,
            a3,
            a4,
            a5_issue,
            a5_waived,
            growth,
            dominating_cap,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
            "schema_version": 1,
            "scenario": "t",
            "interarrival": {"kind": "exponential"},
            "service": {"kind": "exponential"},
            "patience": {"family": "hazard_scaled", "h": {"polynomial": [1.0]}},
            "lambda": 1.0,
            "theta": 0.0,
            "n_grid": [25, 100, 400]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn benchmark_passes() {
        let p = validate_experiment(&base(), false).unwrap();
        assert!(p.report.a3.strictly_decreasing);
        assert!(p.report.a4.holds);
        assert!(p.report.a5_issue.is_none());
        // default sigma_bar is half of H(100) - 0
        assert_eq!(p.report.dominating_cap, Some(50.0));
    }

    #[test]
    fn underloaded_system_without_abandonment_has_no_default_cap() {
        let mut c = base();
        c.theta = -2.0;
        c.patience = serde_json::from_str(r#"{"family": "hazard_scaled", "h": {"polynomial": [0.0]}}"#).unwrap();
        let p = validate_experiment(&c, false).unwrap();
        assert_eq!(p.report.dominating_cap, None);
        assert_eq!(p.report.warnings.len(), 1);
        c.sigma_bar = Some(1.0);
        assert!(matches!(validate_experiment(&c, false), Err(Error::Config(_))));
    }

    #[test]
    fn large_moment_order_only_warns() {
        let mut c = base();
        c.moment_orders = vec![1.0, 3.5];
        let p = validate_experiment(&c, false).unwrap();
        assert!(p.report.warnings.iter().any(|w| w.contains("3.5")));
    }

    #[test]
    fn a5_blocks_unless_waived() {
        let mut c = base();
        c.interarrival = crate::primitives::PrimitiveSpec::Deterministic;
        assert!(matches!(validate_experiment(&c, false), Err(Error::Validation(_))));
        let p = validate_experiment(&c, true).unwrap();
        assert!(p.report.a5_waived);
        assert_eq!(p.report.warnings.len(), 1);
    }

    #[test]
    fn unstable_drift_is_stability_error() {
        let mut c = base();
        c.theta = 1.0;
        c.patience = serde_json::from_str(r#"{"family": "hazard_scaled", "h": {"polynomial": [0.0]}}"#).unwrap();
        assert!(matches!(validate_experiment(&c, false), Err(Error::Stability(_))));
    }

    #[test]
    fn violated_growth_bound_fails() {
        let mut c = base();
        c.patience = serde_json::from_str(
            r#"{"family": "capped_h", "limit": {"polynomial": [0.0, 0.0, 0.0, 1.0]}, "growth": {"c": 1.0, "m": 1.0}}"#,
        )
        .unwrap();
        c.moment_orders = vec![1.0];
        assert!(matches!(validate_experiment(&c, false), Err(Error::Validation(_))));
    }
}
