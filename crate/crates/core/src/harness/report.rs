use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::validate::ValidationReport;
use crate::diffusion::StationarySummary;
use crate::error::{Error, Result};
use crate::simulator::Estimate;

/// Fixed column order of `report.csv`.
pub const CSV_COLUMNS: [&str; 13] = [
    "n",
    "m",
    "sim_moment",
    "ci_half",
    "diff_moment",
    "rel_err",
    "ks",
    "sqrtn_pa",
    "pa_ci",
    "eh",
    "pa_rel_err",
    "seeds",
    "sim_time_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub order: f64,
    /// Time-weighted `E[(sqrt(n) V)^m]`.
    pub sim: Estimate,
    /// Arrival-epoch `E[(sqrt(n) V(t_j-))^m]`; equals `sim` in the limit only under PASTA.
    pub arrival: Estimate,
    pub diffusion: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NRow {
    pub n: u64,
    pub seeds: Vec<u64>,
    pub arrivals_used: u64,
    pub moments: Vec<MomentRow>,
    /// Empirical `P(sqrt(n) V <= g)` on the grid.
    pub sim_cdf: Vec<f64>,
    /// `max_g |sim_cdf - diffusion_cdf|` over the grid only.
    pub grid_ks: f64,
    /// `sqrt(n)` times the abandoned fraction.
    pub sqrtn_pa: Estimate,
    /// `sqrt(n)` times the arrival average of `F^n(V(t_j-))`.
    pub sqrtn_plug_in: Estimate,
    pub expect_h: f64,
    pub pa_rel_err: f64,
    /// Post-burn-in simulated time, summed over replications, in model time units.
    pub sim_time: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeCheck {
    pub dt: f64,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    pub mean: Estimate,
    pub quadrature_mean: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionBlock {
    pub sigma2: f64,
    pub drift_const: f64,
    pub h: String,
    pub stationary: StationarySummary,
    pub moments: Vec<(f64, f64)>,
    pub expect_h: f64,
    pub cdf: Vec<f64>,
    pub sde: Option<SdeCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    /// Per gate order: relative moment error non-increasing along `n`.
    pub moment_monotone: Vec<(f64, bool)>,
    pub abandon_monotone: bool,
    pub gates: Vec<Gate>,
    pub pass: bool,
}

/// Wall-clock information; the only part of a report that varies between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub per_n_elapsed_s: Vec<(u64, f64)>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub scenario: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub moment_orders: Vec<f64>,
    pub cdf_grid: Vec<f64>,
    pub validation: ValidationReport,
    pub diffusion: DiffusionBlock,
    pub rows: Vec<NRow>,
    pub verdicts: Verdicts,
    pub runtime: Runtime,
}

/// `|a - b| / |b|`, or `|a - b|` when `b = 0`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}

pub(crate) fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

impl ConvergenceReport {
    pub fn row(&self, n: u64) -> Option<&NRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn last_row(&self) -> Option<&NRow> {
        self.rows.last()
    }

    /// One line per `(n, m)`; deterministic for fixed config and seeds.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            for m in &r.moments {
                w.write_record([
                    r.n.to_string(),
                    m.order.to_string(),
                    m.sim.mean.to_string(),
                    m.sim.ci_half.to_string(),
                    m.diffusion.to_string(),
                    m.rel_err.to_string(),
                    r.grid_ks.to_string(),
                    r.sqrtn_pa.mean.to_string(),
                    r.sqrtn_pa.ci_half.to_string(),
                    r.expect_h.to_string(),
                    r.pa_rel_err.to_string(),
                    r.seeds.len().to_string(),
                    r.sim_time.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join("report.csv"))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        Ok(())
    }

    /// Union of the rows of two reports of the same configuration hash over
    /// disjoint `n`. Verdicts are left to the caller to recompute.
    pub fn merge(&self, other: &ConvergenceReport) -> Result<ConvergenceReport> {
        if self.config_hash != other.config_hash {
            return Err(Error::Mismatch(format!(
                "config hashes differ ({} vs {})",
                self.config_hash, other.config_hash
            )));
        }
        let mut out = self.clone();
        for r in &other.rows {
            if out.row(r.n).is_some() {
                return Err(Error::Mismatch(format!("both reports contain n = {}", r.n)));
            }
            out.rows.push(r.clone());
        }
        out.rows.sort_by_key(|r| r.n);
        out.runtime.per_n_elapsed_s.extend(other.runtime.per_n_elapsed_s.iter().copied());
        out.runtime.per_n_elapsed_s.sort_by_key(|p| p.0);
        out.runtime.elapsed_s += other.runtime.elapsed_s;
        Ok(out)
    }
}
