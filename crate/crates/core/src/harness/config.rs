use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{SdeConfig, DEFAULT_SDE_DT, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::primitives::{HeavyTrafficParams, PatienceFamily, PatienceSpec, Primitive, PrimitiveSpec};
use crate::simulator::{default_burn_in, SimConfig, DEFAULT_NUM_BATCHES};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that replaces `base_seed`.
pub const SEED_ENV: &str = "ABANDONQ_SEED";

/// Per-`n` budget when `arrivals` is not configured: `max(1e7, 1e5 sqrt(n))`.
pub fn default_arrivals(n: u64) -> u64 {
    (1e5 * (n as f64).sqrt()).ceil().max(1e7) as u64
}

fn default_orders() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_p() -> f64 {
    4.0
}

fn default_batches() -> u64 {
    DEFAULT_NUM_BATCHES
}

fn one() -> u32 {
    1
}

fn default_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.1).collect()
}

fn default_gate_orders() -> Vec<f64> {
    vec![1.0]
}

/// Overrides of the simulation budget for one scale index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NOverride {
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_batches: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u32>,
}

/// Pass/fail gates. Unset gates are not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Moment orders the moment gates look at.
    #[serde(default = "default_gate_orders")]
    pub gate_orders: Vec<f64>,
    /// Relative moment error allowed at the largest `n`.
    #[serde(default)]
    pub moment_rel_err: Option<f64>,
    /// Relative moment error must not increase along `n_grid`.
    #[serde(default)]
    pub moment_monotone: bool,
    /// Grid-KS distance allowed at the largest `n`.
    #[serde(default)]
    pub ks: Option<f64>,
    /// Relative error of `sqrt(n) P_a` against `E[H(V)]` at the largest `n`.
    #[serde(default)]
    pub abandon_rel_err: Option<f64>,
    #[serde(default)]
    pub abandon_monotone: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gate_orders: default_gate_orders(),
            moment_rel_err: None,
            moment_monotone: false,
            ks: None,
            abandon_rel_err: None,
            abandon_monotone: false,
        }
    }
}

/// Euler cross-check of the diffusion, run when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    #[serde(default = "one")]
    pub seeds: u32,
}

fn default_dt() -> f64 {
    DEFAULT_SDE_DT
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSettings>,
}

impl Default for DiffusionSettings {
    fn default() -> Self {
        DiffusionSettings { tol: DEFAULT_TOL, sde: None }
    }
}

fn default_a3_k() -> f64 {
    4.0
}

fn default_a3_grid() -> usize {
    400
}

fn default_x_max() -> f64 {
    100.0
}

/// Parameters of the assumption checks run before any simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSettings {
    /// Window `[0, K]` of the convergence check of `sqrt(n) F^n(x/sqrt(n))` to `H`.
    #[serde(default = "default_a3_k")]
    pub a3_k: f64,
    #[serde(default = "default_a3_grid")]
    pub grid_intervals: usize,
    /// Point at which the stability margin `H(x_max) - theta/lambda` is evaluated.
    #[serde(default = "default_x_max")]
    pub a4_x_max: f64,
    /// Right end of the growth-bound grid.
    #[serde(default = "default_x_max")]
    pub growth_x_max: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            a3_k: default_a3_k(),
            grid_intervals: default_a3_grid(),
            a4_x_max: default_x_max(),
            growth_x_max: default_x_max(),
        }
    }
}

/// One experiment: a model, an `n` grid, budgets and comparison gates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub interarrival: PrimitiveSpec,
    pub service: PrimitiveSpec,
    pub patience: PatienceSpec,
    pub lambda: f64,
    pub theta: f64,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
    /// Moment order `p > 2` for which the primitives must have finite moments.
    #[serde(default = "default_p")]
    pub moment_p: f64,
    /// Arrivals per replication; defaults to [`default_arrivals`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_batches")]
    pub num_batches: u64,
    #[serde(default = "one")]
    pub seeds_per_n: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Levels on the `sqrt(n) V` scale for the empirical CDF and grid-KS.
    #[serde(default = "default_grid")]
    pub cdf_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<NOverride>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub diffusion: DiffusionSettings,
    #[serde(default)]
    pub validation: ValidationSettings,
    /// `sigma_bar` of the dominating system; informational for experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bar: Option<f64>,
    #[serde(default)]
    pub waive_a5: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory that relative paths inside the config resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Budget of one `(n, seed)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub arrivals: u64,
    pub burn_in: u64,
    pub num_batches: u64,
    pub seeds: u32,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Reads a config file; relative table paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Applies `ABANDONQ_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.base_seed =
                v.trim().parse().map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Structural checks that need no model evaluation.
    pub fn check_structure(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_grid.is_empty() {
            return Err(Error::config("n_grid is empty"));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_grid must be positive and strictly increasing"));
        }
        if !(self.moment_p > 2.0) || !self.moment_p.is_finite() {
            return Err(Error::config(format!("moment_p must be finite and > 2, got {}", self.moment_p)));
        }
        if self.moment_orders.is_empty() {
            return Err(Error::config("moment_orders is empty"));
        }
        if self.moment_orders.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::config("moment orders must be positive and finite"));
        }
        for &m in &self.tolerances.gate_orders {
            if !self.moment_orders.contains(&m) {
                return Err(Error::config(format!("gate order {m} is not among moment_orders")));
            }
        }
        if self.seeds_per_n == 0 {
            return Err(Error::config("seeds_per_n must be at least 1"));
        }
        if self.cdf_grid.is_empty()
            || self.cdf_grid.windows(2).any(|w| w[1] <= w[0])
            || self.cdf_grid.iter().any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err(Error::config("cdf_grid must be nonempty, nonnegative and strictly increasing"));
        }
        for o in &self.overrides {
            if !self.n_grid.contains(&o.n) {
                return Err(Error::config(format!("override for n = {} which is not in n_grid", o.n)));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [("moment_rel_err", t.moment_rel_err), ("ks", t.ks), ("abandon_rel_err", t.abandon_rel_err)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::config(format!("tolerance {name} must be >= 0")));
            }
        }
        if !(self.diffusion.tol > 0.0 && self.diffusion.tol < 1e-3) {
            return Err(Error::config("diffusion.tol must lie in (0, 1e-3)"));
        }
        if let Some(s) = &self.diffusion.sde {
            SdeConfig::new(s.dt, s.horizon, s.burn_in, 0).validate()?;
            if s.seeds == 0 {
                return Err(Error::config("diffusion.sde.seeds must be at least 1"));
            }
        }
        if self.sigma_bar.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::config("sigma_bar must be positive"));
        }
        let v = &self.validation;
        if !(v.a3_k > 0.0 && v.a4_x_max > 0.0 && v.growth_x_max > 0.0 && v.grid_intervals > 0) {
            return Err(Error::config("validation settings must be positive"));
        }
        for n in &self.n_grid {
            self.params(*n).validate()?;
            let b = self.budget(*n);
            if b.seeds == 0 || b.num_batches < 2 || b.burn_in >= b.arrivals || (b.arrivals - b.burn_in) < b.num_batches
            {
                return Err(Error::config(format!("inconsistent simulation budget at n = {n}: {b:?}")));
            }
        }
        Ok(())
    }

    pub fn params(&self, n: u64) -> HeavyTrafficParams {
        HeavyTrafficParams { lambda: self.lambda, theta: self.theta, n }
    }

    pub fn budget(&self, n: u64) -> Budget {
        let o = self.overrides.iter().find(|o| o.n == n);
        let arrivals = o.and_then(|o| o.arrivals).or(self.arrivals).unwrap_or_else(|| default_arrivals(n));
        let burn_in = o.and_then(|o| o.burn_in).or(self.burn_in).unwrap_or_else(|| default_burn_in(arrivals));
        Budget {
            arrivals,
            burn_in,
            num_batches: o.and_then(|o| o.num_batches).unwrap_or(self.num_batches),
            seeds: o.and_then(|o| o.seeds).unwrap_or(self.seeds_per_n),
        }
    }

    pub fn interarrival(&self) -> Result<Primitive> {
        Primitive::new(self.interarrival.clone())
    }

    pub fn service(&self) -> Result<Primitive> {
        Primitive::new(self.service.clone())
    }

    pub fn patience(&self) -> Result<PatienceFamily> {
        PatienceFamily::from_spec(&self.patience, self.base_dir.as_deref())
    }

    /// Seed of replication `k` at scale `n`, a fixed mix of `(base_seed, n, k)`.
    pub fn cell_seed(&self, n: u64, k: u32) -> u64 {
        let mut z = self.base_seed ^ splitmix(n) ^ splitmix(0x5EED_0000 + k as u64).rotate_left(17);
        z = splitmix(z);
        z
    }

    /// SHA-256 of the model, budgets, seeds and gates. The `n` grid, the
    /// per-`n` overrides and the output directory are excluded, so reports
    /// over different `n` of one model can be merged.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.n_grid.clear();
        c.overrides.clear();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn sim_config(
        &self,
        n: u64,
        seed: u64,
        interarrival: &Primitive,
        service: &Primitive,
        patience: &PatienceFamily,
    ) -> SimConfig {
        let b = self.budget(n);
        let mut s =
            SimConfig::new(self.params(n), interarrival.clone(), service.clone(), patience.clone(), b.arrivals, seed);
        s.burn_in = b.burn_in;
        s.num_batches = b.num_batches;
        s.moment_orders = self.moment_orders.clone();
        s.cdf_grid = self.cdf_grid.clone();
        s
    }
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "scenario": "t",
        "interarrival": {"kind": "exponential"},
        "service": {"kind": "exponential"},
        "patience": {"family": "hazard_scaled", "h": {"polynomial": [1.0]}},
        "lambda": 1.0,
        "theta": 0.0,
        "n_grid": [25, 100]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.check_structure().unwrap();
        assert_eq!(c.moment_orders, vec![1.0, 2.0]);
        assert_eq!(c.budget(25).arrivals, 10_000_000);
        assert_eq!(c.budget(25).burn_in, 1_000_000);
        assert_eq!(c.seeds_per_n, 1);
        assert_eq!(default_arrivals(1_000_000), 100_000_000);
    }

    #[test]
    fn empty_grid_and_bad_version_are_config_errors() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.n_grid.clear();
        assert!(matches!(c.check_structure(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.n_grid = vec![100, 25];
        assert!(c.check_structure().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.schema_version = 2;
        assert!(c.check_structure().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.moment_orders = vec![0.0];
        assert!(c.check_structure().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"lambda\"", "\"lamda\": 1.0, \"lambda\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.arrivals = Some(50_000);
        c.overrides.push(NOverride {
            n: 100,
            arrivals: Some(80_000),
            burn_in: None,
            num_batches: Some(8),
            seeds: Some(3),
        });
        assert_eq!(c.budget(25), Budget { arrivals: 50_000, burn_in: 10_000, num_batches: 32, seeds: 1 });
        assert_eq!(c.budget(100), Budget { arrivals: 80_000, burn_in: 10_000, num_batches: 8, seeds: 3 });
    }

    #[test]
    fn hash_ignores_grid_and_output_but_not_seed() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.n_grid = vec![400];
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.base_seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn cell_seeds_are_distinct() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut seen = std::collections::HashSet::new();
        for n in [1, 25, 100, 400] {
            for k in 0..50 {
                assert!(seen.insert(c.cell_seed(n, k)));
            }
        }
    }
}
