use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use crate::error::{Error, Result};
use crate::numerics::KahanSum;
use crate::simulator::{BatchSeries, Estimate, MomentEstimate, CI_Z};

pub const DEFAULT_SDE_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    /// Total simulated time, burn-in included.
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    #[serde(default)]
    pub v0: f64,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
    #[serde(default = "default_batches")]
    pub num_batches: u64,
}

fn default_orders() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_batches() -> u64 {
    32
}

impl SdeConfig {
    pub fn new(dt: f64, horizon: f64, burn_in: f64, seed: u64) -> Self {
        SdeConfig {
            dt,
            horizon,
            burn_in,
            seed,
            v0: 0.0,
            moment_orders: default_orders(),
            num_batches: default_batches(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.burn_in >= 0.0) || !(self.horizon > self.burn_in) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "need 0 <= burn_in < horizon, got burn_in {} and horizon {}",
                self.burn_in, self.horizon
            )));
        }
        if !(self.v0 >= 0.0) || !self.v0.is_finite() {
            return Err(Error::config(format!("v0 must be finite and >= 0, got {}", self.v0)));
        }
        if self.moment_orders.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::config("moment orders must be positive"));
        }
        if self.num_batches < 2 {
            return Err(Error::config("at least two batches are needed for a standard error"));
        }
        if self.batch_steps() == 0 {
            return Err(Error::config("post-burn-in horizon shorter than one step per batch"));
        }
        Ok(())
    }

    fn burn_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }

    fn batch_steps(&self) -> u64 {
        let total = (self.horizon / self.dt).round() as u64;
        total.saturating_sub(self.burn_steps()) / self.num_batches
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SdeSums {
    steps: u64,
    moments: Vec<KahanSum>,
    h: KahanSum,
    batches: u64,
    batch_moments: Vec<BatchSeries>,
    batch_h: BatchSeries,
    reflection: KahanSum,
    v_dl: KahanSum,
}

impl SdeSums {
    fn new(k: usize) -> Self {
        SdeSums {
            steps: 0,
            moments: vec![KahanSum::new(); k],
            h: KahanSum::new(),
            batches: 0,
            batch_moments: vec![BatchSeries::default(); k],
            batch_h: BatchSeries::default(),
            reflection: KahanSum::new(),
            v_dl: KahanSum::new(),
        }
    }

    fn merge(&mut self, o: &SdeSums) {
        self.steps += o.steps;
        for (a, b) in self.moments.iter_mut().zip(&o.moments) {
            a.merge(b);
        }
        self.h.merge(&o.h);
        self.batches += o.batches;
        for (a, b) in self.batch_moments.iter_mut().zip(&o.batch_moments) {
            a.merge(b);
        }
        self.batch_h.merge(&o.batch_h);
        self.reflection.merge(&o.reflection);
        self.v_dl.merge(&o.v_dl);
    }
}

/// Time averages of an Euler path of the reflected diffusion.
#[derive(Debug, Clone, Serialize)]
pub struct SdeResult {
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub moment_orders: Vec<f64>,
    /// Post-burn-in time averages of `V^m`.
    pub moments: Vec<MomentEstimate>,
    /// Post-burn-in time average of `H(V)`.
    pub mean_h: Estimate,
    /// Total pushing `L(T)`, burn-in included.
    pub reflection: f64,
    /// `sum V_k dL_k / sum dL_k` with `V_k` the level before the step; NaN without reflection.
    pub complementarity: f64,
    /// Final level of a single path.
    pub v_final: Option<f64>,
    pub steps: u64,
    pub batches: u64,
    #[serde(skip)]
    sums: SdeSums,
}

impl SdeResult {
    fn from_sums(seeds: Vec<u64>, dt: f64, moment_orders: Vec<f64>, sums: SdeSums, v_final: Option<f64>) -> Self {
        let steps = sums.steps as f64;
        let b = sums.batches;
        let est = |mean: f64, se: f64| Estimate { mean, std_err: se, ci_half: CI_Z * se };
        let moments = moment_orders
            .iter()
            .enumerate()
            .map(|(k, &m)| MomentEstimate {
                order: m,
                estimate: est(sums.moments[k].value() / steps, sums.batch_moments[k].std_err(b)),
            })
            .collect();
        let mean_h = est(sums.h.value() / steps, sums.batch_h.std_err(b));
        let refl = sums.reflection.value();
        let complementarity = if refl > 0.0 { sums.v_dl.value() / refl } else { f64::NAN };
        SdeResult {
            seeds,
            dt,
            moment_orders,
            moments,
            mean_h,
            reflection: refl,
            complementarity,
            v_final,
            steps: sums.steps,
            batches: b,
            sums,
        }
    }

    pub fn moment(&self, order: f64) -> Option<&Estimate> {
        self.moments.iter().find(|m| m.order == order).map(|m| &m.estimate)
    }

    /// Pools replications of one configuration; batches of all paths form one sample.
    pub fn merge(&self, other: &SdeResult) -> Result<SdeResult> {
        if self.dt != other.dt || self.moment_orders != other.moment_orders {
            return Err(Error::Mismatch("SDE results with different dt or moment orders".into()));
        }
        let mut sums = self.sums.clone();
        sums.merge(&other.sums);
        let mut seeds = self.seeds.clone();
        seeds.extend(&other.seeds);
        Ok(SdeResult::from_sums(seeds, self.dt, self.moment_orders.clone(), sums, None))
    }
}

#[inline]
fn power(v: f64, m: f64) -> f64 {
    if m == 1.0 {
        v
    } else if m == 2.0 {
        v * v
    } else {
        v.powf(m)
    }
}

/// Euler scheme with projection,
/// `V_{k+1} = max(V_k + (theta/lambda - H(V_k)) dt + sigma sqrt(dt) Z_k, 0)`,
/// with `dL_k` the amount removed by the projection.
pub fn simulate_sde(model: &DiffusionModel, cfg: &SdeConfig) -> Result<SdeResult> {
    cfg.validate()?;
    let orders = &cfg.moment_orders;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = cfg.dt;
    let noise = model.sigma() * dt.sqrt();
    let mut sums = SdeSums::new(orders.len());
    let mut v = cfg.v0;

    let advance = |v: &mut f64, sums: &mut SdeSums, rng: &mut ChaCha8Rng| -> Result<f64> {
        let h = model.h().eval(*v);
        if !h.is_finite() {
            return Err(Error::config(format!("H({}) evaluated to {h}", *v)));
        }
        let z: f64 = if noise > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        let y = *v + (model.drift_const() - h) * dt + noise * z;
        if y < 0.0 {
            sums.reflection.add(-y);
            sums.v_dl.add(*v * -y);
            *v = 0.0;
        } else {
            *v = y;
        }
        Ok(h)
    };

    for _ in 0..cfg.burn_steps() {
        advance(&mut v, &mut sums, &mut rng)?;
    }
    let batch_steps = cfg.batch_steps();
    let mut batch_m = vec![0.0; orders.len()];
    for _ in 0..cfg.num_batches {
        batch_m.iter_mut().for_each(|x| *x = 0.0);
        let mut batch_h = 0.0;
        for _ in 0..batch_steps {
            for (acc, &m) in batch_m.iter_mut().zip(orders) {
                *acc += power(v, m);
            }
            batch_h += advance(&mut v, &mut sums, &mut rng)?;
        }
        let bs = batch_steps as f64;
        for (k, &x) in batch_m.iter().enumerate() {
            sums.moments[k].add(x);
            sums.batch_moments[k].push(x / bs);
        }
        sums.h.add(batch_h);
        sums.batch_h.push(batch_h / bs);
        sums.batches += 1;
        sums.steps += batch_steps;
    }
    Ok(SdeResult::from_sums(vec![cfg.seed], dt, orders.clone(), sums, Some(v)))
}

/// Independent replications over `seeds` in parallel, pooled in seed order.
pub fn simulate_sde_replications(model: &DiffusionModel, cfg: &SdeConfig, seeds: &[u64]) -> Result<SdeResult> {
    if seeds.is_empty() {
        return Err(Error::config("no seeds given"));
    }
    let runs: Vec<SdeResult> =
        seeds.par_iter().map(|&seed| simulate_sde(model, &SdeConfig { seed, ..cfg.clone() })).collect::<Result<_>>()?;
    let (first, rest) = runs.split_first().expect("non-empty");
    rest.iter().try_fold(first.clone(), |acc, r| acc.merge(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::ScalarFn;

    #[test]
    fn deterministic_drain_sticks_at_zero() {
        let m = DiffusionModel::new(0.0, -0.5, ScalarFn::zero()).unwrap();
        let mut cfg = SdeConfig::new(1e-3, 10.0, 0.0, 1);
        cfg.v0 = 2.0;
        cfg.num_batches = 10;
        let r = simulate_sde(&m, &cfg).unwrap();
        assert_eq!(r.v_final, Some(0.0));
        // linear drain over [0, 4], then zero: mean of V over [0, 10] is 0.4
        assert!((r.moment(1.0).unwrap().mean - 0.4).abs() < 1e-3);
        // after hitting zero, each step pushes back |theta/lambda| dt
        assert!((r.reflection - 0.5 * 6.0).abs() < 1e-2);
    }

    #[test]
    fn same_seed_same_path() {
        let m = DiffusionModel::new(1.0, -1.0, ScalarFn::zero()).unwrap();
        let cfg = SdeConfig::new(1e-2, 200.0, 10.0, 7);
        let a = simulate_sde(&m, &cfg).unwrap();
        let b = simulate_sde(&m, &cfg).unwrap();
        assert_eq!(a.moments, b.moments);
        assert_eq!(a.v_final, b.v_final);
    }

    #[test]
    fn complementarity_within_two_sigma_sqrt_dt() {
        let m = DiffusionModel::new(1.0, -1.0, ScalarFn::zero()).unwrap();
        let dt = 1e-3;
        let r = simulate_sde(&m, &SdeConfig::new(dt, 1_000.0, 10.0, 3)).unwrap();
        assert!(r.reflection > 0.0);
        assert!(r.complementarity <= 2.0 * dt.sqrt(), "{}", r.complementarity);
    }

    #[test]
    fn replications_pool_in_seed_order() {
        let m = DiffusionModel::new(1.0, 0.0, ScalarFn::linear(1.0)).unwrap();
        let cfg = SdeConfig::new(1e-2, 100.0, 5.0, 0);
        let pooled = simulate_sde_replications(&m, &cfg, &[1, 2, 3]).unwrap();
        let serial = [1, 2, 3]
            .iter()
            .map(|&s| simulate_sde(&m, &SdeConfig { seed: s, ..cfg.clone() }).unwrap())
            .reduce(|a, b| a.merge(&b).unwrap())
            .unwrap();
        assert_eq!(pooled.moments, serial.moments);
        assert_eq!(pooled.seeds, vec![1, 2, 3]);
        assert_eq!(pooled.batches, 96);
    }

    #[test]
    fn rejects_bad_config() {
        let m = DiffusionModel::new(1.0, -1.0, ScalarFn::zero()).unwrap();
        assert!(simulate_sde(&m, &SdeConfig::new(0.0, 10.0, 1.0, 0)).is_err());
        assert!(simulate_sde(&m, &SdeConfig::new(0.1, 1.0, 1.0, 0)).is_err());
        let nan_h = DiffusionModel::new(1.0, -1.0, ScalarFn::custom("nan", |_| f64::NAN)).unwrap();
        assert!(simulate_sde(&nan_h, &SdeConfig::new(0.1, 10.0, 1.0, 0)).is_err());
    }
}
