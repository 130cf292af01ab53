use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Tolerances};
use super::report::{
    non_increasing, relative_error, ConvergenceReport, DiffusionBlock, Gate, MomentRow, NRow, Runtime, SdeCheck,
    Verdicts,
};
use super::validate::{validate_experiment, Prepared};
use crate::diffusion::{build_stationary, simulate_sde_replications, DiffusionModel, DiffusionStationary, SdeConfig};
use crate::error::{Error, Result};
use crate::simulator::{simulate, Estimate, SimResult};

/// Process exit status of the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    GateFail = 1,
    ConfigOrValidation = 2,
    Stability = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_error(e: &Error) -> Self {
        match e {
            Error::Stability(_) | Error::NonIntegrable(_) => ExitStatus::Stability,
            _ => ExitStatus::ConfigOrValidation,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the global pool when unset.
    pub threads: Option<usize>,
    /// Replaces the config's `output_dir`.
    pub out_dir: Option<PathBuf>,
    pub waive_a5: bool,
}

/// Diffusion side of the comparison: stationary law, its moments, `E[H]`
/// and CDF on the grid, plus the optional Euler cross-check.
pub fn diffusion_block(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(DiffusionStationary, DiffusionBlock)> {
    let model =
        DiffusionModel::from_inputs(&prep.interarrival, &prep.service, &cfg.params(cfg.n_grid[0]), &prep.patience)?;
    let stat = build_stationary(&model, cfg.diffusion.tol)?;
    let moments = cfg.moment_orders.iter().map(|&m| stat.moment(m).map(|v| (m, v))).collect::<Result<Vec<_>>>()?;
    let expect_h = stat.expect_h()?;
    let cdf = cfg.cdf_grid.iter().map(|&g| stat.cdf(g)).collect();
    let sde = match &cfg.diffusion.sde {
        Some(s) => {
            let seeds: Vec<u64> = (0..s.seeds).map(|k| cfg.cell_seed(0, k)).collect();
            let mut sc = SdeConfig::new(s.dt, s.horizon, s.burn_in, 0);
            sc.moment_orders = vec![1.0];
            let r = simulate_sde_replications(&model, &sc, &seeds)?;
            Some(SdeCheck {
                dt: s.dt,
                horizon: s.horizon,
                seeds,
                mean: r.moments[0].estimate,
                quadrature_mean: stat.moment(1.0)?,
                complementarity: r.complementarity,
            })
        }
        None => None,
    };
    let block = DiffusionBlock {
        sigma2: model.sigma2(),
        drift_const: model.drift_const(),
        h: model.h().describe(),
        stationary: stat.summary(),
        moments,
        expect_h,
        cdf,
        sde,
    };
    Ok((stat, block))
}

fn build_row(n: u64, res: &SimResult, diff: &DiffusionBlock) -> NRow {
    let sn = (n as f64).sqrt();
    let moments = diff
        .moments
        .iter()
        .map(|&(m, d)| {
            let sim = *res.moment(m).expect("simulated orders match the config");
            let arrival = res
                .arrival_moments
                .iter()
                .find(|a| a.order == m)
                .map(|a| a.estimate)
                .expect("simulated orders match the config");
            MomentRow { order: m, sim, arrival, diffusion: d, rel_err: relative_error(sim.mean, d) }
        })
        .collect();
    let grid_ks = res.scaled_cdf.iter().zip(&diff.cdf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max).clamp(0.0, 1.0);
    let scale = |e: &Estimate| Estimate { mean: sn * e.mean, std_err: sn * e.std_err, ci_half: sn * e.ci_half };
    let sqrtn_pa = scale(&res.abandon_fraction);
    NRow {
        n,
        seeds: res.seeds.clone(),
        arrivals_used: res.arrivals_used,
        moments,
        sim_cdf: res.scaled_cdf.clone(),
        grid_ks,
        sqrtn_pa,
        sqrtn_plug_in: scale(&res.plug_in_abandon),
        expect_h: diff.expect_h,
        pa_rel_err: relative_error(sqrtn_pa.mean, diff.expect_h),
        sim_time: res.sim_time,
        warnings: res.warnings.clone(),
    }
}

/// Applies the configured gates to the rows (sorted by `n`); gates look at
/// the largest `n`, monotonicity at the whole grid.
pub fn evaluate(tol: &Tolerances, rows: &[NRow]) -> Verdicts {
    let mut gates = Vec::new();
    let moment_monotone: Vec<(f64, bool)> = tol
        .gate_orders
        .iter()
        .map(|&m| {
            let errs: Vec<f64> =
                rows.iter().filter_map(|r| r.moments.iter().find(|x| x.order == m).map(|x| x.rel_err)).collect();
            (m, non_increasing(&errs))
        })
        .collect();
    let pa_errs: Vec<f64> = rows.iter().map(|r| r.pa_rel_err).collect();
    let abandon_monotone = non_increasing(&pa_errs);
    if let Some(last) = rows.last() {
        if let Some(t) = tol.moment_rel_err {
            for &m in &tol.gate_orders {
                if let Some(x) = last.moments.iter().find(|x| x.order == m) {
                    gates.push(Gate {
                        name: format!("moment_rel_err[m={m}]@n={}", last.n),
                        value: x.rel_err,
                        threshold: t,
                        pass: x.rel_err <= t,
                    });
                }
            }
        }
        if let Some(t) = tol.ks {
            gates.push(Gate {
                name: format!("grid_ks@n={}", last.n),
                value: last.grid_ks,
                threshold: t,
                pass: last.grid_ks <= t,
            });
        }
        if let Some(t) = tol.abandon_rel_err {
            gates.push(Gate {
                name: format!("abandon_rel_err@n={}", last.n),
                value: last.pa_rel_err,
                threshold: t,
                pass: last.pa_rel_err <= t,
            });
        }
    }
    if tol.moment_monotone {
        for &(m, ok) in &moment_monotone {
            gates.push(Gate {
                name: format!("moment_monotone[m={m}]"),
                value: if ok { 1.0 } else { 0.0 },
                threshold: 1.0,
                pass: ok,
            });
        }
    }
    if tol.abandon_monotone {
        gates.push(Gate {
            name: "abandon_monotone".into(),
            value: if abandon_monotone { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass: abandon_monotone,
        });
    }
    let pass = gates.iter().all(|g| g.pass);
    Verdicts { moment_monotone, abandon_monotone, gates, pass }
}

/// Validates, simulates every `(n, seed)` cell, builds the diffusion once and
/// assembles the report. Cells run in parallel; replications of each `n` are
/// pooled in seed-index order, so results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ConvergenceReport> {
    match opts.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config(format!("cannot start {t} worker threads: {e}")))?;
            pool.install(|| run_inner(cfg, opts, t))
        }
        None => run_inner(cfg, opts, rayon::current_num_threads()),
    }
}

fn run_inner(cfg: &ExperimentConfig, opts: &RunOptions, threads: usize) -> Result<ConvergenceReport> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let prep = validate_experiment(cfg, opts.waive_a5)?;
    let (_stat, diffusion) = diffusion_block(cfg, &prep)?;

    let cells: Vec<(u64, u32)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.budget(n).seeds).map(move |k| (n, k))).collect();
    let outcomes: Vec<(u64, SimResult, f64)> = cells
        .par_iter()
        .map(|&(n, k)| {
            let t = Instant::now();
            let sc = cfg.sim_config(n, cfg.cell_seed(n, k), &prep.interarrival, &prep.service, &prep.patience);
            simulate(&sc).map(|r| (n, r, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut per_n = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let runs: Vec<SimResult> = outcomes.iter().filter(|o| o.0 == n).map(|o| o.1.clone()).collect();
        let pooled = SimResult::pool(&runs)?;
        rows.push(build_row(n, &pooled, &diffusion));
        per_n.push((n, outcomes.iter().filter(|o| o.0 == n).map(|o| o.2).sum()));
    }
    let verdicts = evaluate(&cfg.tolerances, &rows);
    Ok(ConvergenceReport {
        schema_version: cfg.schema_version,
        scenario: cfg.scenario.clone(),
        config_hash: cfg.hash(),
        base_seed: cfg.base_seed,
        moment_orders: cfg.moment_orders.clone(),
        cdf_grid: cfg.cdf_grid.clone(),
        validation: prep.report,
        diffusion,
        rows,
        verdicts,
        runtime: Runtime {
            started_unix_s,
            elapsed_s: started.elapsed().as_secs_f64(),
            per_n_elapsed_s: per_n,
            threads,
        },
    })
}

/// Runs, writes `report.csv` and `report.json` into the output directory
/// (when one is configured) and maps the outcome to an exit status. The
/// report is written before a gate failure is reported.
pub fn run_and_write(cfg: &ExperimentConfig, opts: &RunOptions) -> (ExitStatus, Result<ConvergenceReport>) {
    let report = match run_experiment(cfg, opts) {
        Ok(r) => r,
        Err(e) => return (ExitStatus::from_error(&e), Err(e)),
    };
    let dir = opts.out_dir.clone().or_else(|| {
        cfg.output_dir.as_ref().map(|d| match &cfg.base_dir {
            Some(b) if d.is_relative() => b.join(d),
            _ => d.clone(),
        })
    });
    if let Some(dir) = dir {
        if let Err(e) = report.write_to(&dir) {
            return (ExitStatus::ConfigOrValidation, Err(e));
        }
    }
    let status = if report.verdicts.pass { ExitStatus::Pass } else { ExitStatus::GateFail };
    (status, Ok(report))
}
