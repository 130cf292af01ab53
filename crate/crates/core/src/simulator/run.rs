use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{step, SegmentAccumulator};
use super::stats::{PathCheck, SimResult, SimSums};
use crate::error::{Error, Result};
use crate::numerics::KahanSum;
use crate::primitives::{HeavyTrafficParams, PatienceFamily, Primitive};
use crate::scaling::DominatingFamily;

pub const DEFAULT_NUM_BATCHES: u64 = 32;
pub const MIN_BURN_IN: u64 = 10_000;
pub const PATH_DUMP_MAX_ROWS: u64 = 1_000_000;

/// 10% of the arrivals, at least [`MIN_BURN_IN`], but never more than half the run.
pub fn default_burn_in(num_arrivals: u64) -> u64 {
    (num_arrivals / 10).max(MIN_BURN_IN).min(num_arrivals / 2)
}

/// State at time zero: residual time to the first arrival and initial workload.
/// `tau0 = None` draws the first inter-arrival time from the inter-arrival law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    #[serde(default)]
    pub tau0: Option<f64>,
    #[serde(default)]
    pub v0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: HeavyTrafficParams,
    pub interarrival: Primitive,
    pub service: Primitive,
    pub patience: PatienceFamily,
    pub num_arrivals: u64,
    pub burn_in: u64,
    pub num_batches: u64,
    pub seed: u64,
    /// Orders `m` of the scaled moments `E[(sqrt(n) V)^m]`.
    pub moment_orders: Vec<f64>,
    /// Levels (on the `sqrt(n) V` scale) of the empirical CDF.
    pub cdf_grid: Vec<f64>,
    #[serde(default)]
    pub initial: InitialState,
    /// Writes `(event_time, v_pre, v_post, abandoned)` rows, capped at
    /// [`PATH_DUMP_MAX_ROWS`].
    #[serde(default)]
    pub path_dump: Option<PathBuf>,
}

impl SimConfig {
    pub fn new(
        params: HeavyTrafficParams,
        interarrival: Primitive,
        service: Primitive,
        patience: PatienceFamily,
        num_arrivals: u64,
        seed: u64,
    ) -> Self {
        SimConfig {
            params,
            interarrival,
            service,
            patience,
            num_arrivals,
            burn_in: default_burn_in(num_arrivals),
            num_batches: DEFAULT_NUM_BATCHES,
            seed,
            moment_orders: vec![1.0, 2.0],
            cdf_grid: (0..=40).map(|i| i as f64 * 0.1).collect(),
            initial: InitialState::default(),
            path_dump: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.num_batches < 2 {
            return Err(Error::config("num_batches must be at least 2"));
        }
        if self.burn_in >= self.num_arrivals {
            return Err(Error::config(format!(
                "burn-in ({}) must be smaller than the number of arrivals ({})",
                self.burn_in, self.num_arrivals
            )));
        }
        if self.batch_size() == 0 {
            return Err(Error::config("fewer post-burn-in arrivals than batches"));
        }
        if self.moment_orders.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::config("moment orders must be positive and finite"));
        }
        if self.cdf_grid.windows(2).any(|w| w[1] <= w[0]) || self.cdf_grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("cdf_grid must be finite and strictly increasing"));
        }
        let InitialState { tau0, v0 } = self.initial;
        if !(v0 >= 0.0 && v0.is_finite()) || tau0.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::config("initial state must be nonnegative and finite"));
        }
        Ok(())
    }

    /// Arrivals per batch; the remainder after integer division is not simulated.
    pub fn batch_size(&self) -> u64 {
        self.num_arrivals.saturating_sub(self.burn_in) / self.num_batches.max(1)
    }

    /// Arrivals actually simulated: burn-in plus whole batches.
    pub fn arrivals_simulated(&self) -> u64 {
        self.burn_in + self.batch_size() * self.num_batches
    }
}

/// Independent per-primitive random streams of one replication. Sharing a
/// seed shares every stream, which is how coupled systems see common
/// inter-arrival, service and patience randomness.
pub struct InputStreams {
    interarrival: ChaCha8Rng,
    service: ChaCha8Rng,
    patience: ChaCha8Rng,
    inv_arrival_rate: f64,
    inv_service_rate: f64,
}

impl InputStreams {
    pub fn new(seed: u64, params: &HeavyTrafficParams) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        InputStreams {
            interarrival: stream(0),
            service: stream(1),
            patience: stream(2),
            inv_arrival_rate: 1.0 / params.arrival_rate(),
            inv_service_rate: 1.0 / params.service_rate(),
        }
    }

    /// `u_base / (n lambda)`.
    #[inline]
    pub fn interarrival(&mut self, law: &Primitive) -> f64 {
        law.sample(&mut self.interarrival) * self.inv_arrival_rate
    }

    /// `v_base / mu_n`.
    #[inline]
    pub fn service(&mut self, law: &Primitive) -> f64 {
        law.sample(&mut self.service) * self.inv_service_rate
    }

    /// Uniform driving the inverse-transform patience draw.
    #[inline]
    pub fn patience_uniform(&mut self) -> f64 {
        self.patience.random()
    }
}

/// Collects post-burn-in statistics of one system.
struct Recorder<'a> {
    cfg: &'a SimConfig,
    sqrt_n: f64,
    batch_size: u64,
    arrivals_seen: u64,
    in_batch: u64,
    batch: SegmentAccumulator,
    batch_arrivals: u64,
    batch_abandons: u64,
    batch_plug_in: KahanSum,
    batch_arrival_moments: Vec<KahanSum>,
    sums: SimSums,
    path: PathAccumulator,
}

struct PathAccumulator {
    v_initial: f64,
    v: f64,
    accepted: KahanSum,
    busy: KahanSum,
    idle: KahanSum,
    elapsed: KahanSum,
    arrivals: u64,
}

impl PathAccumulator {
    fn new(v0: f64) -> Self {
        PathAccumulator {
            v_initial: v0,
            v: v0,
            accepted: KahanSum::new(),
            busy: KahanSum::new(),
            idle: KahanSum::new(),
            elapsed: KahanSum::new(),
            arrivals: 0,
        }
    }

    fn drain(&mut self, v_start: f64, duration: f64) -> f64 {
        let busy = v_start.min(duration);
        self.busy.add(busy);
        self.idle.add(duration - busy);
        self.elapsed.add(duration);
        self.v = (v_start - duration).max(0.0);
        self.v
    }

    fn finish(&self) -> PathCheck {
        PathCheck {
            v_initial: self.v_initial,
            v_final: self.v,
            accepted_work: self.accepted.value(),
            busy_time: self.busy.value(),
            idle_time: self.idle.value(),
            elapsed: self.elapsed.value(),
            arrivals: self.arrivals,
        }
    }
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let sqrt_n = cfg.params.sqrt_n();
        let levels: Vec<f64> = cfg.cdf_grid.iter().map(|g| g / sqrt_n).collect();
        let k = cfg.moment_orders.len();
        Recorder {
            cfg,
            sqrt_n,
            batch_size: cfg.batch_size(),
            arrivals_seen: 0,
            in_batch: 0,
            batch: SegmentAccumulator::new(k, levels),
            batch_arrivals: 0,
            batch_abandons: 0,
            batch_plug_in: KahanSum::new(),
            batch_arrival_moments: vec![KahanSum::new(); k],
            sums: SimSums::new(k, cfg.cdf_grid.len()),
            path: PathAccumulator::new(cfg.initial.v0),
        }
    }

    /// Arrival at `V(t_j-) = v_pre` with outcome, then a drain of `u_next`.
    fn record(&mut self, v_pre: f64, service: f64, abandoned: bool, v_post: f64, u_next: f64) -> Result<()> {
        self.arrivals_seen += 1;
        self.path.arrivals += 1;
        if !abandoned {
            self.path.accepted.add(service);
        }
        self.path.drain(v_post, u_next);
        if self.arrivals_seen <= self.cfg.burn_in {
            return Ok(());
        }
        let orders = &self.cfg.moment_orders;
        self.batch_arrivals += 1;
        if abandoned {
            self.batch_abandons += 1;
        }
        self.batch_plug_in.add(self.cfg.patience.cdf(self.cfg.params.n, v_pre)?);
        let scaled = self.sqrt_n * v_pre;
        for (acc, &m) in self.batch_arrival_moments.iter_mut().zip(orders) {
            acc.add(scaled.powf(m));
        }
        self.batch.add(v_post, u_next, orders);
        self.in_batch += 1;
        if self.in_batch == self.batch_size {
            self.close_batch();
        }
        Ok(())
    }

    fn close_batch(&mut self) {
        let orders = &self.cfg.moment_orders;
        let t = self.batch.time.value();
        let a = self.batch_arrivals as f64;
        let s = &mut self.sums;
        if t > 0.0 {
            for k in 0..orders.len() {
                s.batch_moments[k].push(self.batch.moments[k].value() / t);
            }
        } else {
            s.empty_batches += 1;
            for series in s.batch_moments.iter_mut() {
                series.push(0.0);
            }
        }
        for (k, series) in s.batch_arrival_moments.iter_mut().enumerate() {
            series.push(self.batch_arrival_moments[k].value() / a);
        }
        s.batch_abandon.push(self.batch_abandons as f64 / a);
        s.batch_plug_in.push(self.batch_plug_in.value() / a);
        s.batches += 1;

        s.time.merge(&self.batch.time);
        for (acc, b) in s.moments.iter_mut().zip(&self.batch.moments) {
            acc.merge(b);
        }
        for (acc, b) in s.below.iter_mut().zip(self.batch.time_below()) {
            acc.add(b);
        }
        s.arrivals += self.batch_arrivals;
        s.abandons += self.batch_abandons;
        s.plug_in.merge(&self.batch_plug_in);
        for (acc, b) in s.arrival_moments.iter_mut().zip(&self.batch_arrival_moments) {
            acc.merge(b);
        }

        self.batch = SegmentAccumulator::new(orders.len(), self.batch_levels());
        self.batch_arrivals = 0;
        self.batch_abandons = 0;
        self.batch_plug_in = KahanSum::new();
        self.batch_arrival_moments = vec![KahanSum::new(); orders.len()];
        self.in_batch = 0;
    }

    fn batch_levels(&self) -> Vec<f64> {
        self.cfg.cdf_grid.iter().map(|g| g / self.sqrt_n).collect()
    }

    fn finish(self) -> SimResult {
        let mut warnings = Vec::new();
        if let Some(w) = crate::primitives::check_unbounded_interarrival(&self.cfg.interarrival) {
            warnings.push(w);
        }
        SimResult::from_sums(
            self.cfg.params.n,
            vec![self.cfg.seed],
            self.cfg.moment_orders.clone(),
            self.cfg.cdf_grid.clone(),
            self.sums,
            Some(self.path.finish()),
            warnings,
        )
    }
}

struct PathDump {
    out: BufWriter<File>,
    rows: u64,
}

impl PathDump {
    fn open(path: &PathBuf) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "event_time,v_pre,v_post,abandoned")?;
        Ok(PathDump { out, rows: 0 })
    }

    fn row(&mut self, t: f64, v_pre: f64, v_post: f64, abandoned: bool) -> Result<()> {
        if self.rows < PATH_DUMP_MAX_ROWS {
            writeln!(self.out, "{t},{v_pre},{v_post},{}", u8::from(abandoned))?;
            self.rows += 1;
        }
        Ok(())
    }
}

/// Simulates `V^n` for the configured number of arrivals and reports
/// time-weighted statistics of `sqrt(n) V^n` after burn-in.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let n = cfg.params.n;
    let mut streams = InputStreams::new(cfg.seed, &cfg.params);
    let mut rec = Recorder::new(cfg);
    let mut dump = cfg.path_dump.as_ref().map(PathDump::open).transpose()?;

    let tau0 = match cfg.initial.tau0 {
        Some(t) => t,
        None => streams.interarrival(&cfg.interarrival),
    };
    let mut clock = tau0;
    let mut v = rec.path.drain(cfg.initial.v0, tau0);
    for _ in 0..cfg.arrivals_simulated() {
        let service = streams.service(&cfg.service);
        let patience = cfg.patience.inverse_cdf(n, streams.patience_uniform());
        let u_next = streams.interarrival(&cfg.interarrival);
        let out = step(v, u_next, service, patience);
        if let Some(d) = dump.as_mut() {
            d.row(clock, v, out.v_post, out.abandoned)?;
        }
        rec.record(v, service, out.abandoned, out.v_post, u_next)?;
        v = out.v_next;
        clock += u_next;
    }
    if let Some(mut d) = dump {
        d.out.flush()?;
    }
    Ok(rec.finish())
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledOutcome {
    pub original: SimResult,
    pub dominating: SimResult,
    /// Max over event epochs of `V(t) - nu_max(t) - V*(t)`; the domination
    /// inequality holds when this is `<= 0`.
    pub max_violation: f64,
    /// Epochs at which the inequality was checked.
    pub epochs_checked: u64,
}

/// Runs the original system and its dominating copy on shared randomness.
/// Patience times are coupled through the dominating family.
pub fn simulate_coupled(cfg: &SimConfig, dom: &DominatingFamily) -> Result<CoupledOutcome> {
    simulate_coupled_with(cfg, |n, d| dom.couple(n, d))
}

/// [`simulate_coupled`] with an arbitrary coupling `d -> d*`. The coupling must
/// return `d* >= d` for the inequality to be guaranteed.
pub fn simulate_coupled_with<C>(cfg: &SimConfig, couple: C) -> Result<CoupledOutcome>
where
    C: Fn(u64, f64) -> Result<f64>,
{
    cfg.validate()?;
    let n = cfg.params.n;
    let mut streams = InputStreams::new(cfg.seed, &cfg.params);
    let mut rec = Recorder::new(cfg);
    let mut rec_star = Recorder::new(cfg);

    let tau0 = match cfg.initial.tau0 {
        Some(t) => t,
        None => streams.interarrival(&cfg.interarrival),
    };
    let mut v = rec.path.drain(cfg.initial.v0, tau0);
    let mut v_star = rec_star.path.drain(cfg.initial.v0, tau0);
    let mut nu_max: f64 = 0.0;
    // t = 0 and t = tau0-: both systems share the initial state and drain alike.
    let mut max_violation = v - nu_max - v_star;
    let mut epochs = 1u64;

    for _ in 0..cfg.arrivals_simulated() {
        let service = streams.service(&cfg.service);
        let d = cfg.patience.inverse_cdf(n, streams.patience_uniform());
        let d_star = couple(n, d)?;
        let u_next = streams.interarrival(&cfg.interarrival);

        let out = step(v, u_next, service, d);
        let out_star = step(v_star, u_next, service, d_star);
        nu_max = nu_max.max(service);
        max_violation = max_violation.max(out.v_post - nu_max - out_star.v_post);
        max_violation = max_violation.max(out.v_next - nu_max - out_star.v_next);
        epochs += 2;

        rec.record(v, service, out.abandoned, out.v_post, u_next)?;
        rec_star.record(v_star, service, out_star.abandoned, out_star.v_post, u_next)?;
        v = out.v_next;
        v_star = out_star.v_next;
    }
    let mut dominating = rec_star.finish();
    dominating.warnings.push("dominating system (coupled patience)".into());
    Ok(CoupledOutcome { original: rec.finish(), dominating, max_violation, epochs_checked: epochs })
}
