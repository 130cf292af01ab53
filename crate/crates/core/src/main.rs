use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use abandonq::diffusion::{build_stationary, DiffusionModel};
use abandonq::harness::{
    emit_plots, run_and_write, validate_experiment, ConvergenceReport, ExitStatus, ExperimentConfig, RunOptions,
};
use abandonq::Result;

#[derive(Parser)]
#[command(name = "abandonq", version, about = "GI/GI/1+GI heavy-traffic simulation against its diffusion limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every n of the grid and compare with the diffusion.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Run even when the inter-arrival law is bounded.
        #[arg(long)]
        waive_a5: bool,
    },
    /// Run the assumption checks only and print their report.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        waive_a5: bool,
    },
    /// Stationary law of the limiting diffusion: moments, E[H], CDF and quantiles.
    Diffusion {
        #[arg(long)]
        config: PathBuf,
        /// Also write `x,density,cdf` to this file.
        #[arg(long)]
        density_csv: Option<PathBuf>,
    },
    /// SVG plots from a `report.json`.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn fail(e: abandonq::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(ExitStatus::from_error(&e).code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads, waive_a5 } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let opts = RunOptions { threads, out_dir: out, waive_a5 };
            let (status, report) = run_and_write(&cfg, &opts);
            match report {
                Ok(r) => {
                    for row in &r.rows {
                        for m in &row.moments {
                            println!(
                                "n={:<8} m={:<4} sim={:.6} +/- {:.6}  diffusion={:.6}  rel_err={:.4}",
                                row.n, m.order, m.sim.mean, m.sim.ci_half, m.diffusion, m.rel_err
                            );
                        }
                        println!(
                            "n={:<8} grid-KS={:.4}  sqrt(n) P_a={:.6} +/- {:.6}  E[H]={:.6}  rel_err={:.4}",
                            row.n, row.grid_ks, row.sqrtn_pa.mean, row.sqrtn_pa.ci_half, row.expect_h, row.pa_rel_err
                        );
                    }
                    for g in &r.verdicts.gates {
                        println!(
                            "{} {} = {} (threshold {})",
                            if g.pass { "PASS" } else { "FAIL" },
                            g.name,
                            g.value,
                            g.threshold
                        );
                    }
                    println!("config hash {}", r.config_hash);
                    ExitCode::from(status.code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { config, waive_a5 } => {
            let result = load(&config).and_then(|cfg| validate_experiment(&cfg, waive_a5));
            match result {
                Ok(p) => match serde_json::to_string_pretty(&p.report) {
                    Ok(s) => {
                        println!("{s}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e.into()),
                },
                Err(e) => fail(e),
            }
        }
        Command::Diffusion { config, density_csv } => match diffusion_tables(&config, density_csv.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        Command::Plot { report, out } => {
            let dir = out.unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
            match ConvergenceReport::load(&report).and_then(|r| emit_plots(&r, &dir)) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}

fn diffusion_tables(config: &Path, density_csv: Option<&Path>) -> Result<()> {
    let cfg = load(config)?;
    cfg.check_structure()?;
    let model = DiffusionModel::from_inputs(
        &cfg.interarrival()?,
        &cfg.service()?,
        &cfg.params(cfg.n_grid[0]),
        &cfg.patience()?,
    )?;
    let stat = build_stationary(&model, cfg.diffusion.tol)?;
    println!("sigma2        {}", model.sigma2());
    println!("theta/lambda  {}", model.drift_const());
    println!("H             {}", model.h().describe());
    println!("M             {}", stat.normalizer());
    println!("x_cut         {}", stat.x_cut());
    for &m in &cfg.moment_orders {
        println!("E[V^{m}]{:width$}{}", "", stat.moment(m)?, width = 8usize.saturating_sub(format!("{m}").len()));
    }
    println!("E[H(V)]       {}", stat.expect_h()?);
    println!();
    println!("{:>10} {:>14}", "x", "P(V <= x)");
    for &g in &cfg.cdf_grid {
        println!("{g:>10.4} {:>14.10}", stat.cdf(g));
    }
    println!();
    println!("{:>10} {:>14}", "q", "quantile");
    for q in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
        println!("{q:>10} {:>14.10}", stat.quantile(q)?);
    }
    if let Some(p) = density_csv {
        let x_max = stat.quantile(0.999)?.max(*cfg.cdf_grid.last().unwrap_or(&1.0));
        stat.write_csv(std::fs::File::create(p)?, x_max, 400)?;
    }
    Ok(())
}
