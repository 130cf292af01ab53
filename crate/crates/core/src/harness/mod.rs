//! Experiment orchestration: config, assumption checks, the `(n, seed)`
//! simulation grid, comparison against the diffusion, reports and plots.

mod config;
mod plot;
mod report;
mod run;
mod validate;

pub use config::{
    default_arrivals, Budget, DiffusionSettings, ExperimentConfig, NOverride, SdeSettings, Tolerances,
    ValidationSettings, SCHEMA_VERSION, SEED_ENV,
};
pub use plot::{abandonment_svg, cdf_overlay_svg, emit_plots, error_vs_n_svg};
pub use report::{
    relative_error, ConvergenceReport, DiffusionBlock, Gate, MomentRow, NRow, Runtime, SdeCheck, Verdicts, CSV_COLUMNS,
};
pub use run::{diffusion_block, evaluate, run_and_write, run_experiment, ExitStatus, RunOptions};
pub use validate::{validate_experiment, Prepared, ValidationReport};

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(
            r#"{
            "schema_version": 1,
            "scenario": "small",
            "interarrival": {"kind": "exponential"},
            "service": {"kind": "exponential"},
            "patience": {"family": "hazard_scaled", "h": {"polynomial": [1.0]}},
            "lambda": 1.0,
            "theta": 0.0,
            "n_grid": [4, 16],
            "arrivals": 200000,
            "seeds_per_n": 2,
            "base_seed": 5
        }"#,
        )
        .unwrap();
        c.tolerances.moment_rel_err = Some(0.5);
        c
    }

    #[test]
    fn small_run_fills_rows() {
        let r = run_experiment(&small(), &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.seeds.len(), 2);
            assert!((0.0..=1.0).contains(&row.grid_ks));
            assert!(row.moments.iter().all(|m| m.sim.ci_half > 0.0));
            assert!(row.sqrtn_pa.ci_half > 0.0);
        }
        // reflected OU with sigma^2 = 2: half-normal, mean sqrt(2/pi)
        let mean = r.diffusion.moments[0].1;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
        assert!((r.diffusion.expect_h - mean).abs() < 1e-9);
        assert_eq!(r.verdicts.gates.len(), 1);
    }

    #[test]
    fn thread_count_does_not_change_csv() {
        let c = small();
        let a = run_experiment(&c, &RunOptions { threads: Some(1), ..Default::default() }).unwrap();
        let b = run_experiment(&c, &RunOptions { threads: Some(3), ..Default::default() }).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        let header = String::from_utf8(x).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, CSV_COLUMNS.join(","));
    }

    #[test]
    fn exit_status_mapping() {
        let mut c = small();
        c.n_grid.clear();
        assert_eq!(run_and_write(&c, &RunOptions::default()).0, ExitStatus::ConfigOrValidation);
        let mut c = small();
        c.theta = 1.0;
        c.patience = serde_json::from_str(r#"{"family": "hazard_scaled", "h": {"polynomial": [0.0]}}"#).unwrap();
        assert_eq!(run_and_write(&c, &RunOptions::default()).0, ExitStatus::Stability);
        let mut c = small();
        c.tolerances.ks = Some(0.0);
        let dir = tempfile::tempdir().unwrap();
        let (status, report) =
            run_and_write(&c, &RunOptions { out_dir: Some(dir.path().into()), ..Default::default() });
        assert_eq!(status, ExitStatus::GateFail);
        assert!(report.is_ok());
        assert!(dir.path().join("report.csv").exists());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn plots_are_wellformed_and_ks_matches() {
        let r = run_experiment(&small(), &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        for f in &files {
            let s = std::fs::read_to_string(f).unwrap();
            assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
            assert_eq!(s.matches("<svg").count(), 1);
        }
        let cdf = cdf_overlay_svg(&r);
        let ks: f64 = cdf.split("grid-KS = ").nth(1).unwrap().split('<').next().unwrap().parse().unwrap();
        assert_eq!(ks, r.last_row().unwrap().grid_ks);
    }

    #[test]
    fn single_n_report_plots() {
        let mut c = small();
        c.n_grid = vec![9];
        let r = run_experiment(&c, &RunOptions::default()).unwrap();
        let svg = error_vs_n_svg(&r);
        assert_eq!(svg.matches("<circle").count(), r.moment_orders.len());
    }

    #[test]
    fn reports_merge_only_with_same_hash() {
        let mut a_cfg = small();
        a_cfg.n_grid = vec![4];
        let mut b_cfg = small();
        b_cfg.n_grid = vec![16];
        let a = run_experiment(&a_cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&b_cfg, &RunOptions::default()).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![4, 16]);
        assert!(a.merge(&a).is_err());
        let mut c_cfg = small();
        c_cfg.base_seed = 99;
        c_cfg.n_grid = vec![16];
        let c = run_experiment(&c_cfg, &RunOptions::default()).unwrap();
        assert!(a.merge(&c).is_err());
    }
}
