use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::KahanSum;

/// Confidence intervals are reported as `CI_Z` batch-means standard errors.
pub const CI_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    /// `CI_Z * std_err`.
    pub ci_half: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        (self.mean - x).abs() <= self.ci_half
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub order: f64,
    #[serde(flatten)]
    pub estimate: Estimate,
}

/// Sum and sum of squares of per-batch values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct BatchSeries {
    sum: KahanSum,
    sum_sq: KahanSum,
}

impl BatchSeries {
    pub fn push(&mut self, x: f64) {
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub(crate) fn merge(&mut self, o: &BatchSeries) {
        self.sum.merge(&o.sum);
        self.sum_sq.merge(&o.sum_sq);
    }

    /// Standard error of the batch mean over `b` batches.
    pub(crate) fn std_err(&self, b: u64) -> f64 {
        if b < 2 {
            return f64::NAN;
        }
        let bf = b as f64;
        let mean = self.sum.value() / bf;
        let var = ((self.sum_sq.value() - bf * mean * mean) / (bf - 1.0)).max(0.0);
        (var / bf).sqrt()
    }
}

/// Bookkeeping of the whole path, burn-in included, for the conservation checks
/// `busy + idle = elapsed` and `V(end) = V(0) + accepted work - busy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub v_initial: f64,
    pub v_final: f64,
    pub accepted_work: f64,
    pub busy_time: f64,
    pub idle_time: f64,
    pub elapsed: f64,
    pub arrivals: u64,
}

/// Raw mergeable sums behind a [`SimResult`]. Time integrals are in real
/// time of the unscaled process.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SimSums {
    pub time: KahanSum,
    pub moments: Vec<KahanSum>,
    pub below: Vec<KahanSum>,
    pub arrivals: u64,
    pub abandons: u64,
    pub plug_in: KahanSum,
    pub arrival_moments: Vec<KahanSum>,
    pub batches: u64,
    pub batch_moments: Vec<BatchSeries>,
    pub batch_arrival_moments: Vec<BatchSeries>,
    pub batch_abandon: BatchSeries,
    pub batch_plug_in: BatchSeries,
    pub empty_batches: u64,
}

impl SimSums {
    pub fn new(num_orders: usize, grid_len: usize) -> Self {
        SimSums {
            time: KahanSum::new(),
            moments: vec![KahanSum::new(); num_orders],
            below: vec![KahanSum::new(); grid_len],
            arrivals: 0,
            abandons: 0,
            plug_in: KahanSum::new(),
            arrival_moments: vec![KahanSum::new(); num_orders],
            batches: 0,
            batch_moments: vec![BatchSeries::default(); num_orders],
            batch_arrival_moments: vec![BatchSeries::default(); num_orders],
            batch_abandon: BatchSeries::default(),
            batch_plug_in: BatchSeries::default(),
            empty_batches: 0,
        }
    }

    fn merge(&mut self, o: &SimSums) {
        self.time.merge(&o.time);
        for (a, b) in self.moments.iter_mut().zip(&o.moments) {
            a.merge(b);
        }
        for (a, b) in self.below.iter_mut().zip(&o.below) {
            a.merge(b);
        }
        self.arrivals += o.arrivals;
        self.abandons += o.abandons;
        self.plug_in.merge(&o.plug_in);
        for (a, b) in self.arrival_moments.iter_mut().zip(&o.arrival_moments) {
            a.merge(b);
        }
        self.batches += o.batches;
        for (a, b) in self.batch_moments.iter_mut().zip(&o.batch_moments) {
            a.merge(b);
        }
        for (a, b) in self.batch_arrival_moments.iter_mut().zip(&o.batch_arrival_moments) {
            a.merge(b);
        }
        self.batch_abandon.merge(&o.batch_abandon);
        self.batch_plug_in.merge(&o.batch_plug_in);
        self.empty_batches += o.empty_batches;
    }
}

/// Stationary estimates of the scaled offered waiting time `sqrt(n) V^n`.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub n: u64,
    pub seeds: Vec<u64>,
    pub moment_orders: Vec<f64>,
    /// Time-weighted `E[(sqrt(n) V)^m]`.
    pub scaled_moments: Vec<MomentEstimate>,
    /// Arrival-epoch `E[(sqrt(n) V(t_j-))^m]`.
    pub arrival_moments: Vec<MomentEstimate>,
    pub cdf_grid: Vec<f64>,
    /// Time-weighted `P(sqrt(n) V <= g)` for each grid level.
    pub scaled_cdf: Vec<f64>,
    /// Abandoned over post-burn-in arrivals.
    pub abandon_fraction: Estimate,
    /// Arrival-epoch average of `F^n(V(t_j-))`.
    pub plug_in_abandon: Estimate,
    /// Post-burn-in simulated time.
    pub sim_time: f64,
    pub arrivals_used: u64,
    pub batches: u64,
    /// Present for a single replication; dropped when results are pooled.
    pub path: Option<PathCheck>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub(crate) sums: SimSums,
}

impl SimResult {
    pub(crate) fn from_sums(
        n: u64,
        seeds: Vec<u64>,
        moment_orders: Vec<f64>,
        cdf_grid: Vec<f64>,
        sums: SimSums,
        path: Option<PathCheck>,
        mut warnings: Vec<String>,
    ) -> Self {
        let sn = (n as f64).sqrt();
        let t = sums.time.value();
        let b = sums.batches;
        let arrivals = sums.arrivals as f64;
        let estimate = |mean: f64, se: f64| Estimate { mean, std_err: se, ci_half: CI_Z * se };
        let scaled_moments = moment_orders
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let scale = sn.powf(m);
                MomentEstimate {
                    order: m,
                    estimate: estimate(scale * sums.moments[k].value() / t, scale * sums.batch_moments[k].std_err(b)),
                }
            })
            .collect();
        let arrival_moments = moment_orders
            .iter()
            .enumerate()
            .map(|(k, &m)| MomentEstimate {
                order: m,
                estimate: estimate(
                    sums.arrival_moments[k].value() / arrivals,
                    sums.batch_arrival_moments[k].std_err(b),
                ),
            })
            .collect();
        let scaled_cdf = sums.below.iter().map(|s| (s.value() / t).clamp(0.0, 1.0)).collect();
        let abandon_fraction = estimate(sums.abandons as f64 / arrivals, sums.batch_abandon.std_err(b));
        let plug_in_abandon = estimate(sums.plug_in.value() / arrivals, sums.batch_plug_in.std_err(b));
        if sums.empty_batches > 0 {
            let msg = format!("{} batch(es) with zero simulated time", sums.empty_batches);
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
        SimResult {
            n,
            seeds,
            moment_orders,
            scaled_moments,
            arrival_moments,
            cdf_grid,
            scaled_cdf,
            abandon_fraction,
            plug_in_abandon,
            sim_time: t,
            arrivals_used: sums.arrivals,
            batches: b,
            path,
            warnings,
            sums,
        }
    }

    pub fn moment(&self, order: f64) -> Option<&Estimate> {
        self.scaled_moments.iter().find(|m| m.order == order).map(|m| &m.estimate)
    }

    /// Time-weighted pooling of two results of the same configuration.
    /// Batches of both runs are treated as one batch sample.
    pub fn merge(&self, other: &SimResult) -> Result<SimResult> {
        if self.n != other.n || self.moment_orders != other.moment_orders || self.cdf_grid != other.cdf_grid {
            return Err(Error::Mismatch(format!("n/orders/grid differ (n = {} vs {})", self.n, other.n)));
        }
        let mut sums = self.sums.clone();
        sums.merge(&other.sums);
        let mut seeds = self.seeds.clone();
        seeds.extend(&other.seeds);
        let mut warnings = self.warnings.clone();
        for w in &other.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        Ok(SimResult::from_sums(self.n, seeds, self.moment_orders.clone(), self.cdf_grid.clone(), sums, None, warnings))
    }

    /// Pools a non-empty slice left to right.
    pub fn pool(results: &[SimResult]) -> Result<SimResult> {
        let (first, rest) = results.split_first().ok_or_else(|| Error::Mismatch("nothing to pool".into()))?;
        rest.iter().try_fold(first.clone(), |acc, r| acc.merge(r))
    }
}
