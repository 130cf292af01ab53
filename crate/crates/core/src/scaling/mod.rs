//! The dominating patience system: a capped copy of a patience family whose
//! customers are coupled to the originals by inverse transform so that every
//! coupled patience time is at least as long as the original. Also hosts the
//! polynomial growth check on `sqrt(n) F^n(x / sqrt(n))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::monotone_lower_crossing;
use crate::primitives::{check_a4, HeavyTrafficParams, PatienceFamily};

/// Bisection tolerance (in x) for level-set infima of the capped CDF.
pub const LEVEL_SET_TOL: f64 = 1e-12;

/// Patience family with `sqrt(n) F*^n(x/sqrt(n)) = min{sqrt(n) F^n(x/sqrt(n)), cap}`,
/// where `cap = theta/lambda + sigma_bar`. Equivalently `F*^n = min{F^n, cap/sqrt(n)}`,
/// a sub-probability CDF whose missing mass sits at `+inf`.
#[derive(Debug, Clone)]
pub struct DominatingFamily {
    base: PatienceFamily,
    cap_level: f64,
    sigma_bar: f64,
}

impl DominatingFamily {
    pub fn new(base: PatienceFamily, params: &HeavyTrafficParams, sigma_bar: f64) -> Result<Self> {
        if !(sigma_bar > 0.0 && sigma_bar.is_finite()) {
            return Err(Error::config(format!("sigma_bar must be positive and finite, got {sigma_bar}")));
        }
        let cap_level = params.drift() + sigma_bar;
        if !(cap_level > 0.0) {
            return Err(Error::config(format!("cap level theta/lambda + sigma_bar = {cap_level} must be positive")));
        }
        Ok(DominatingFamily { base, cap_level, sigma_bar })
    }

    /// `sigma_bar = 0.5 (H(x_max) - theta/lambda)`; fails when that margin is not positive.
    pub fn with_default_cap(base: PatienceFamily, params: &HeavyTrafficParams, x_max: f64) -> Result<Self> {
        let a4 = check_a4(base.limit(), params, x_max);
        if !a4.holds {
            return Err(Error::Stability(format!(
                "H({x_max}) - theta/lambda = {} leaves no room for a cap",
                a4.margin
            )));
        }
        Self::new(base, params, 0.5 * a4.margin)
    }

    pub fn base(&self) -> &PatienceFamily {
        &self.base
    }

    pub fn cap_level(&self) -> f64 {
        self.cap_level
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }

    /// Largest value of `F*^n`.
    pub fn sup_cdf(&self, n: u64) -> f64 {
        (self.cap_level / (n as f64).sqrt()).min(1.0)
    }

    /// `F*^n(x)`.
    pub fn cdf(&self, n: u64, x: f64) -> Result<f64> {
        Ok(self.base.cdf(n, x)?.min(self.sup_cdf(n)))
    }

    /// `sqrt(n) F*^n(x / sqrt(n))`.
    pub fn scaled_cdf(&self, n: u64, x: f64) -> Result<f64> {
        Ok(self.base.scaled_cdf(n, x)?.min(self.cap_level))
    }

    /// Infimum of `{x : F*^n(x) >= p}` by bisection; `None` above the cap.
    pub fn level_set_infimum(&self, n: u64, p: f64) -> Option<f64> {
        if p > self.sup_cdf(n) {
            return None;
        }
        let x = monotone_lower_crossing(|x| self.cdf(n, x).unwrap_or(f64::NAN), p, LEVEL_SET_TOL, 1e15)?;
        // `x` approaches from below; step to the first point inside the level set.
        let hi = x + LEVEL_SET_TOL * x.max(1.0);
        Some(if self.cdf(n, x).unwrap_or(0.0) >= p { x } else { hi })
    }

    /// Coupled patience `d* = inf{x : F*^n(x) = F^n(d)}`, `+inf` when `F^n(d)`
    /// exceeds the cap.
    ///
    /// When `F^n(d)` is at or below the cap, `F*^n(d) = F^n(d)`, so `d` lies in
    /// its own level set and the infimum is at most `d`. It falls strictly
    /// below `d` only if `F^n` is flat just left of `d`, which has probability
    /// zero for inverse-transform draws; the infimum is clamped at `d` so that
    /// `d* >= d` holds for every draw. The coupled law is still `F*^n`.
    pub fn couple(&self, n: u64, d: f64) -> Result<f64> {
        if d.is_infinite() {
            return Ok(f64::INFINITY);
        }
        let p = self.base.cdf(n, d)?;
        if p > self.sup_cdf(n) {
            Ok(f64::INFINITY)
        } else {
            Ok(d)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: u64,
    /// `min over the grid of c (1 + x^m) - sqrt(n) F^n(x / sqrt(n))`.
    pub worst_margin: f64,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub c: f64,
    pub m: f64,
    pub holds: bool,
    pub rows: Vec<GrowthRow>,
    /// Grid point with the most negative margin, when the bound fails.
    pub witness: Option<(u64, f64)>,
}

/// Checks `sqrt(n) F^n(x/sqrt(n)) <= c (1 + x^m)` on an equispaced grid of
/// `grid_intervals + 1` points over `[0, x_max]` for each `n`.
pub fn check_growth(
    fam: &PatienceFamily,
    c: f64,
    m: f64,
    n_list: &[u64],
    x_max: f64,
    grid_intervals: usize,
) -> Result<GrowthReport> {
    if !(c > 0.0 && m > 0.0 && x_max > 0.0) {
        return Err(Error::config("check_growth needs c > 0, m > 0 and x_max > 0"));
    }
    let grid_intervals = grid_intervals.max(1);
    let mut rows = Vec::with_capacity(n_list.len());
    let mut witness: Option<(u64, f64, f64)> = None;
    for &n in n_list {
        let mut worst = f64::INFINITY;
        let mut at = 0.0;
        for i in 0..=grid_intervals {
            let x = x_max * i as f64 / grid_intervals as f64;
            let margin = c * (1.0 + x.powf(m)) - fam.scaled_cdf(n, x)?;
            if margin < worst {
                worst = margin;
                at = x;
            }
        }
        if worst < 0.0 && witness.is_none_or(|w| worst < w.2) {
            witness = Some((n, at, worst));
        }
        rows.push(GrowthRow { n, worst_margin: worst, witness: at });
    }
    Ok(GrowthReport { c, m, holds: witness.is_none(), rows, witness: witness.map(|w| (w.0, w.1)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{PiecewiseLinear, ScalarFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(theta: f64, n: u64) -> HeavyTrafficParams {
        HeavyTrafficParams::new(1.0, theta, n).unwrap()
    }

    #[test]
    fn capped_scaled_cdf_is_min() {
        let base = PatienceFamily::hazard_scaled(ScalarFn::linear(1.0));
        let dom = DominatingFamily::new(base.clone(), &params(0.2, 100), 0.3).unwrap();
        for n in [1, 100, 10_000] {
            for i in 0..=100 {
                let x = i as f64 * 0.05;
                let expect = base.scaled_cdf(n, x).unwrap().min(0.5);
                let got = dom.scaled_cdf(n, x).unwrap();
                assert!((got - expect).abs() < 1e-12);
                assert!(dom.cdf(n, x).unwrap() <= base.cdf(n, x).unwrap());
            }
        }
    }

    #[test]
    fn zero_draw_couples_to_zero() {
        let base = PatienceFamily::hazard_scaled(ScalarFn::constant(1.0));
        let dom = DominatingFamily::new(base, &params(0.0, 1), 0.5).unwrap();
        assert_eq!(dom.couple(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn non_binding_cap_is_identity() {
        let base = PatienceFamily::capped(ScalarFn::Polynomial(vec![0.0, 0.0, 1.0]));
        // cap 10 >= sqrt(n) = 10
        let dom = DominatingFamily::new(base.clone(), &params(0.0, 100), 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let d = base.sample(100, &mut rng);
            assert_eq!(dom.couple(100, d).unwrap(), d);
        }
    }

    #[test]
    fn exponential_capped_level_sets() {
        // n = 1, F(d) = 1 - e^{-d}, cap level c = 0.4 < 1
        let base = PatienceFamily::hazard_scaled(ScalarFn::constant(1.0));
        let dom = DominatingFamily::new(base, &params(0.0, 1), 0.4).unwrap();
        let d_cap = -(0.6f64).ln();
        for &d in &[0.1, 0.3, d_cap * 0.999, d_cap * 1.001, 2.0] {
            let got = dom.couple(1, d).unwrap();
            if 1.0 - (-d).exp() <= 0.4 {
                assert_eq!(got, d);
            } else {
                assert_eq!(got, f64::INFINITY);
            }
        }
    }

    #[test]
    fn level_set_infimum_on_flat_table() {
        let t = PiecewiseLinear::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 0.2, 0.2, 0.8]).unwrap();
        let base = PatienceFamily::external_table(t, None);
        let dom = DominatingFamily::new(base, &params(0.0, 1), 0.5).unwrap();
        let x = dom.level_set_infimum(1, 0.2).unwrap();
        assert!((x - 1.0).abs() < 1e-9, "{x}");
        // d inside the flat stretch couples to itself, never below
        assert_eq!(dom.couple(1, 1.5).unwrap(), 1.5);
        // F(3) = 0.5 reaches the cap exactly
        let at_cap = dom.couple(1, 3.0).unwrap();
        assert!(at_cap >= 3.0 && at_cap.is_finite());
        assert_eq!(dom.couple(1, 3.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn coupled_draws_dominate() {
        let fams = vec![
            PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)),
            PatienceFamily::hazard_scaled(ScalarFn::linear(2.0)),
            PatienceFamily::capped(ScalarFn::Polynomial(vec![0.0, 0.0, 1.0])),
            PatienceFamily::unscaled(crate::primitives::PatienceDist::Uniform { upper: 2.0 }),
            PatienceFamily::external_table(
                PiecewiseLinear::new(vec![0.0, 0.5, 1.0, 3.0], vec![0.0, 0.4, 0.6, 1.0]).unwrap(),
                None,
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for fam in fams {
            for &n in &[1u64, 25] {
                let dom = DominatingFamily::new(fam.clone(), &params(0.0, n), 0.8).unwrap();
                for _ in 0..20_000 {
                    let d = fam.sample(n, &mut rng);
                    let ds = dom.couple(n, d).unwrap();
                    assert!(ds >= d, "{fam:?}: d={d} d*={ds}");
                }
            }
        }
    }

    #[test]
    fn coupled_draws_follow_capped_law() {
        // n = 1, exponential(1), cap 0.5: P(d* <= x) = min(F(x), 0.5)
        let base = PatienceFamily::hazard_scaled(ScalarFn::constant(1.0));
        let dom = DominatingFamily::new(base.clone(), &params(0.0, 1), 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 200_000;
        let x = 0.4;
        let hits = (0..draws)
            .filter(|_| {
                let d = base.inverse_cdf(1, rng.random());
                dom.couple(1, d).unwrap() <= x
            })
            .count() as f64
            / draws as f64;
        let p = 1.0 - (-x).exp();
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits - p).abs() < 4.0 * se);
    }

    #[test]
    fn default_cap_uses_stability_margin() {
        let base = PatienceFamily::hazard_scaled(ScalarFn::constant(1.0));
        let dom = DominatingFamily::with_default_cap(base.clone(), &params(1.0, 4), 11.0).unwrap();
        assert_eq!(dom.sigma_bar(), 5.0);
        assert_eq!(dom.cap_level(), 6.0);
        let none = PatienceFamily::no_abandonment();
        assert!(DominatingFamily::with_default_cap(none, &params(1.0, 4), 11.0).is_err());
    }

    #[test]
    fn growth_examples() {
        let beta = 1.3;
        let fam = PatienceFamily::hazard_scaled(ScalarFn::constant(beta));
        let r = check_growth(&fam, beta, 1.0, &[1, 100, 10_000], 20.0, 400).unwrap();
        assert!(r.holds);

        let fam = PatienceFamily::capped(ScalarFn::Polynomial(vec![0.0, 0.0, 1.0]));
        let r = check_growth(&fam, 1.0, 2.0, &[1, 100, 10_000], 20.0, 400).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn growth_counterexample_reports_witness() {
        // sqrt(n) F^n(x/sqrt(n)) = min{x^3, sqrt(n)} outgrows 1 + x
        let fam = PatienceFamily::capped(ScalarFn::Polynomial(vec![0.0, 0.0, 0.0, 1.0]));
        let r = check_growth(&fam, 1.0, 1.0, &[100, 10_000], 5.0, 50).unwrap();
        assert!(!r.holds);
        let (n, x) = r.witness.unwrap();
        assert!(fam.scaled_cdf(n, x).unwrap() > 1.0 + x);
    }
}
