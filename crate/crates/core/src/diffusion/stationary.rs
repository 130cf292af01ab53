use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::DiffusionModel;
use crate::error::{Error, Result};
use crate::numerics::{adaptive_gk, adaptive_simpson, gauss_kronrod_15, monotone_lower_crossing, KahanSum};
use crate::primitives::ScalarFn;

/// Default relative accuracy of the normalizer and of the neglected tail mass.
pub const DEFAULT_TOL: f64 = 1e-10;
/// The truncation search gives up past this point.
pub const X_SEARCH_LIMIT: f64 = 1e6;
/// Absolute accuracy of `cdf` and of `quantile` inversion.
pub const CDF_TOL: f64 = 1e-10;

const QUAD_PANELS: usize = 64;
const CDF_CELLS: usize = 1024;
const MAX_GK_PANELS: usize = 200_000;
const TABLE_STEP: f64 = 0.125;

/// `x -> int_0^x H`, in closed form or from memoized cell integrals.
#[derive(Debug, Clone)]
enum IntegratedH {
    Closed(ScalarFn),
    Tabulated { h: ScalarFn, prefix: Vec<f64> },
}

impl IntegratedH {
    fn new(h: &ScalarFn) -> Self {
        if h.has_closed_integral() {
            IntegratedH::Closed(h.antiderivative())
        } else {
            IntegratedH::Tabulated { h: h.clone(), prefix: vec![0.0] }
        }
    }

    fn cell(h: &ScalarFn, a: f64, b: f64) -> Result<f64> {
        Ok(adaptive_simpson(|s| h.eval(s), a, b, 1e-13, 1_000_000)?.value)
    }

    fn extend_to(&mut self, x: f64) -> Result<()> {
        if let IntegratedH::Tabulated { h, prefix } = self {
            while ((prefix.len() - 1) as f64) * TABLE_STEP < x {
                let k = (prefix.len() - 1) as f64;
                let next = prefix[prefix.len() - 1] + Self::cell(h, k * TABLE_STEP, (k + 1.0) * TABLE_STEP)?;
                prefix.push(next);
            }
        }
        Ok(())
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            IntegratedH::Closed(big_h) => big_h.eval(x),
            IntegratedH::Tabulated { h, prefix } => {
                let k = ((x / TABLE_STEP).floor() as usize).min(prefix.len() - 1);
                let a = k as f64 * TABLE_STEP;
                prefix[k] + Self::cell(h, a, x).unwrap_or(f64::NAN)
            }
        }
    }
}

/// Stationary law `f(x) = M exp(l(x))`, `l(x) = (2/sigma^2)(theta x/lambda - int_0^x H)`,
/// truncated at `x_cut`.
#[derive(Debug, Clone)]
pub struct DiffusionStationary {
    model: DiffusionModel,
    integrated_h: IntegratedH,
    tol: f64,
    log_normalizer: f64,
    mode: f64,
    x_cut: f64,
    tail_bound: f64,
    quad_error: f64,
    breaks: Vec<f64>,
    cdf_nodes: Vec<f64>,
    cdf_prefix: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarySummary {
    pub normalizer: f64,
    pub mode: f64,
    pub x_cut: f64,
    pub tail_bound: f64,
    pub quad_error: f64,
}

impl DiffusionStationary {
    #[inline]
    fn log_unnormalized(&self, x: f64) -> f64 {
        log_unnormalized(&self.model, &self.integrated_h, x)
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `M`.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Point where `H` first reaches `theta/lambda`; the density peaks there.
    pub fn mode(&self) -> f64 {
        self.mode
    }

    pub fn x_cut(&self) -> f64 {
        self.x_cut
    }

    /// Upper bound on the relative mass beyond `x_cut`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Error estimate of the normalizing integral, relative.
    pub fn quad_error(&self) -> f64 {
        self.quad_error
    }

    pub fn summary(&self) -> StationarySummary {
        StationarySummary {
            normalizer: self.normalizer(),
            mode: self.mode,
            x_cut: self.x_cut,
            tail_bound: self.tail_bound,
            quad_error: self.quad_error,
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_normalizer + self.log_unnormalized(x)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// `int_0^inf g(x) f(x) dx` over the truncated support.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let q = adaptive_gk(&|x: f64| g(x) * self.density(x), &self.breaks, 1e-15, 0.1 * self.tol, MAX_GK_PANELS)?;
        Ok(q.value)
    }

    /// `E[V(inf)^m]`, `m > 0`.
    pub fn moment(&self, m: f64) -> Result<f64> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::config(format!("moment order must be positive, got {m}")));
        }
        if m == 1.0 {
            self.expect(|x| x)
        } else if m == 2.0 {
            self.expect(|x| x * x)
        } else {
            self.expect(|x| x.powf(m))
        }
    }

    /// `E[H(V(inf))]`.
    pub fn expect_h(&self) -> Result<f64> {
        if self.model.h().is_identically_zero() {
            return Ok(0.0);
        }
        self.expect(|x| self.model.h().eval(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x >= self.x_cut {
            return self.cdf_prefix[self.cdf_prefix.len() - 1].min(1.0);
        }
        let step = self.x_cut / CDF_CELLS as f64;
        let k = ((x / step).floor() as usize).min(CDF_CELLS - 1);
        let a = self.cdf_nodes[k];
        let partial = if x > a {
            adaptive_gk(&|s: f64| self.density(s), &[a, x], 0.01 * CDF_TOL, 0.0, MAX_GK_PANELS)
                .map(|q| q.value)
                .unwrap_or_else(|_| gauss_kronrod_15(&|s: f64| self.density(s), a, x).value)
        } else {
            0.0
        };
        (self.cdf_prefix[k] + partial).clamp(0.0, 1.0)
    }

    /// Smallest `x` with `cdf(x) >= q`, to within `CDF_TOL`-level accuracy.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::config(format!("quantile level must lie in (0, 1), got {q}")));
        }
        let total = self.cdf(self.x_cut);
        if q >= total {
            return Ok(self.x_cut);
        }
        let (mut lo, mut hi) = (0.0, self.x_cut);
        for _ in 0..200 {
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// True when `l'(x) < 0` on a grid of `(mode, x_cut]`: the density decreases
    /// past its mode, as the stability condition requires.
    pub fn decreasing_past_mode(&self, points: usize) -> bool {
        let start = self.mode;
        let span = self.x_cut - start;
        (1..=points.max(1)).all(|i| {
            let x = start + span * i as f64 / points.max(1) as f64;
            self.model.drift(x) < 0.0
        })
    }

    /// Two-column CSV `x,density,cdf` on `points + 1` equispaced nodes of `[0, x_max]`.
    pub fn write_csv<W: Write>(&self, out: W, x_max: f64, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density", "cdf"])?;
        let points = points.max(1);
        for i in 0..=points {
            let x = x_max * i as f64 / points as f64;
            w.write_record([format!("{x}"), format!("{:e}", self.density(x)), format!("{}", self.cdf(x))])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn log_unnormalized(model: &DiffusionModel, ih: &IntegratedH, x: f64) -> f64 {
    (2.0 / model.sigma2()) * (model.drift_const() * x - ih.eval(x))
}

/// Builds the stationary law of the reflected diffusion.
///
/// The density is integrated as `exp(l(x) - l(mode))`, so large `theta/sigma^2`
/// cannot overflow. Truncation doubles `x_cut` until `exp(l(x_cut)) / |l'(x_cut)|`,
/// which bounds the tail once `H` is non-decreasing, is below `tol` times the
/// mass already found.
pub fn build_stationary(model: &DiffusionModel, tol: f64) -> Result<DiffusionStationary> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::config(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let sigma2 = model.sigma2();
    if !(sigma2 > 0.0) {
        return Err(Error::config("stationary density requires sigma2 > 0"));
    }
    let drift = model.drift_const();
    let h = model.h();
    let margin = h.eval(X_SEARCH_LIMIT) - drift;
    if !(margin > 0.0) {
        return Err(Error::Stability(format!("H({X_SEARCH_LIMIT:e}) - theta/lambda = {margin} is not positive")));
    }
    let mode = if h.eval(0.0) >= drift {
        0.0
    } else {
        monotone_lower_crossing(|x| h.eval(x), drift, 1e-13, X_SEARCH_LIMIT).unwrap_or(X_SEARCH_LIMIT)
    };

    let mut ih = IntegratedH::new(h);
    let mut x_cut = (10.0 * (1.0 + drift.abs().max(1.0))).max(2.0 * mode + 1.0);
    let (l_ref, z, z_err, breaks, tail_bound) = loop {
        if x_cut > X_SEARCH_LIMIT {
            return Err(Error::NonIntegrable(format!(
                "tail of exp(l) not below {tol:e} of the total by x = {X_SEARCH_LIMIT:e}"
            )));
        }
        ih.extend_to(x_cut)?;
        let l_ref = log_unnormalized(model, &ih, mode);
        let slope = (2.0 / sigma2) * model.drift(x_cut);
        if !l_ref.is_finite() {
            return Err(Error::Quadrature(format!("log-density not finite at the mode {mode}")));
        }
        if slope < 0.0 {
            let breaks = panel_breaks(mode, x_cut);
            let g = |x: f64| (log_unnormalized(model, &ih, x) - l_ref).exp();
            let q = adaptive_gk(&g, &breaks, 0.0, 0.1 * tol, MAX_GK_PANELS)?;
            let tail = (log_unnormalized(model, &ih, x_cut) - l_ref).exp() / slope.abs();
            if tail < tol * q.value {
                break (l_ref, q.value, q.error, breaks, tail / q.value);
            }
        }
        x_cut *= 2.0;
    };

    let log_normalizer = -(l_ref + z.ln());
    let mut stat = DiffusionStationary {
        model: model.clone(),
        integrated_h: ih,
        tol,
        log_normalizer,
        mode,
        x_cut,
        tail_bound,
        quad_error: z_err / z,
        breaks,
        cdf_nodes: Vec::new(),
        cdf_prefix: Vec::new(),
    };

    let step = x_cut / CDF_CELLS as f64;
    let nodes: Vec<f64> = (0..=CDF_CELLS).map(|k| k as f64 * step).collect();
    let mut prefix = Vec::with_capacity(CDF_CELLS + 1);
    let mut acc = KahanSum::new();
    prefix.push(0.0);
    for w in nodes.windows(2) {
        let q = adaptive_gk(&|s: f64| stat.density(s), w, 1e-14, 1e-13, MAX_GK_PANELS)?;
        acc.add(q.value);
        prefix.push(acc.value());
    }
    stat.cdf_nodes = nodes;
    stat.cdf_prefix = prefix;
    Ok(stat)
}

fn panel_breaks(mode: f64, x_cut: f64) -> Vec<f64> {
    let mut b: Vec<f64> = (0..=QUAD_PANELS).map(|k| x_cut * k as f64 / QUAD_PANELS as f64).collect();
    if mode > 0.0 && mode < x_cut {
        b.push(mode);
        b.sort_by(f64::total_cmp);
        b.dedup();
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn exponential_case() -> DiffusionStationary {
        let m = DiffusionModel::new(1.0, -1.0, ScalarFn::zero()).unwrap();
        build_stationary(&m, DEFAULT_TOL).unwrap()
    }

    fn half_normal_case() -> DiffusionStationary {
        let m = DiffusionModel::new(1.0, 0.0, ScalarFn::linear(1.0)).unwrap();
        build_stationary(&m, DEFAULT_TOL).unwrap()
    }

    #[test]
    fn exponential_normalizer_and_moments() {
        let s = exponential_case();
        assert!(rel(s.normalizer(), 2.0) < 1e-10, "{}", s.normalizer());
        assert!(rel(s.moment(1.0).unwrap(), 0.5) < 1e-10);
        assert!(rel(s.moment(2.0).unwrap(), 0.5) < 1e-10);
        assert_eq!(s.expect_h().unwrap(), 0.0);
        assert!(rel(s.quantile(0.5).unwrap(), LN_2 / 2.0) < 1e-9);
        assert_eq!(s.cdf(0.0), 0.0);
        assert!(s.cdf(s.x_cut()) >= 1.0 - 1e-10);
        assert!(s.tail_bound() < 1e-10);
    }

    #[test]
    fn half_normal_normalizer_and_mean() {
        let s = half_normal_case();
        assert!(rel(s.normalizer(), 2.0 / PI.sqrt()) < 1e-10);
        assert!(rel(s.moment(1.0).unwrap(), 1.0 / PI.sqrt()) < 1e-10);
        assert!(rel(s.expect_h().unwrap(), 1.0 / PI.sqrt()) < 1e-10);
        // second moment of |N(0, 1/2)|
        assert!(rel(s.moment(2.0).unwrap(), 0.5) < 1e-10);
    }

    #[test]
    fn half_normal_quantiles_match_erf_inverse() {
        let s = half_normal_case();
        // V = |N(0, 1/2)|, so P(V <= x) = erf(x) and quantile(q) = erf^{-1}(q).
        for &q in &[0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
            let oracle = statrs::function::erf::erf_inv(q);
            let x = s.quantile(q).unwrap();
            assert!((x - oracle).abs() < 1e-8, "q={q}: {x} vs {oracle}");
            assert!((s.cdf(oracle) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_plus_linear_drift_uses_quadrature() {
        // f ~ exp(-2x - x^2): M^{-1} = (sqrt(pi)/2) e erfc(1)
        let m = DiffusionModel::new(1.0, -1.0, ScalarFn::linear(1.0)).unwrap();
        let s = build_stationary(&m, DEFAULT_TOL).unwrap();
        let z = PI.sqrt() / 2.0 * 1f64.exp() * statrs::function::erf::erfc(1.0);
        assert!(rel(s.normalizer(), 1.0 / z) < 1e-9);
    }

    #[test]
    fn quadratic_h_matches_brute_force_simpson() {
        let m = DiffusionModel::new(1.0, 0.5, ScalarFn::Polynomial(vec![0.0, 0.0, 1.0])).unwrap();
        let s = build_stationary(&m, DEFAULT_TOL).unwrap();
        // composite Simpson with 10^7 uniform panels on [0, 12]
        let l = |x: f64| 2.0 * (0.5 * x - x * x * x / 3.0);
        let n = 10_000_000usize;
        let (a, b) = (0.0, 12.0);
        let h = (b - a) / n as f64;
        let mut acc = KahanSum::new();
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc.add(w * l(a + i as f64 * h).exp());
        }
        let oracle_m = 1.0 / (acc.value() * h / 3.0);
        assert!(rel(s.normalizer(), oracle_m) < 1e-8, "{} vs {oracle_m}", s.normalizer());
    }

    #[test]
    fn custom_h_uses_memoized_integral() {
        let poly = DiffusionModel::new(1.5, 0.5, ScalarFn::Polynomial(vec![0.0, 0.0, 1.0])).unwrap();
        let custom = DiffusionModel::new(1.5, 0.5, ScalarFn::custom("x^2", |x| x * x)).unwrap();
        let a = build_stationary(&poly, DEFAULT_TOL).unwrap();
        let b = build_stationary(&custom, DEFAULT_TOL).unwrap();
        assert!(rel(a.normalizer(), b.normalizer()) < 1e-9);
        assert!(rel(a.moment(1.0).unwrap(), b.moment(1.0).unwrap()) < 1e-9);
    }

    #[test]
    fn large_drift_does_not_overflow() {
        // mode far out; exp(l(mode)) ~ e^{2500} would overflow without the shift
        let m = DiffusionModel::new(0.1, 50.0, ScalarFn::linear(1.0)).unwrap();
        let s = build_stationary(&m, DEFAULT_TOL).unwrap();
        // Gaussian with mean 50 and variance 0.05, far from the boundary
        assert!(rel(s.moment(1.0).unwrap(), 50.0) < 1e-10);
        assert!((s.mode() - 50.0).abs() < 1e-9);
        assert!(s.normalizer().is_finite());
    }

    #[test]
    fn stability_and_degenerate_errors() {
        let bad = DiffusionModel::new(1.0, 1.0, ScalarFn::zero()).unwrap();
        assert!(matches!(build_stationary(&bad, DEFAULT_TOL), Err(Error::Stability(_))));
        let flat = DiffusionModel::new(1.0, 1.0, ScalarFn::constant(1.0)).unwrap();
        assert!(matches!(build_stationary(&flat, DEFAULT_TOL), Err(Error::Stability(_))));
        let zero = DiffusionModel::new(0.0, -1.0, ScalarFn::zero()).unwrap();
        assert!(matches!(build_stationary(&zero, DEFAULT_TOL), Err(Error::Config(_))));
        let s = exponential_case();
        assert!(s.quantile(0.0).is_err());
        assert!(s.quantile(1.0).is_err());
        assert!(s.moment(0.0).is_err());
    }

    #[test]
    fn density_integrates_to_one_and_decays() {
        for h in [
            ScalarFn::zero(),
            ScalarFn::constant(1.0),
            ScalarFn::linear(2.0),
            ScalarFn::Power { coef: 1.0, exponent: 1.5 },
            ScalarFn::custom("1+sin", |x: f64| x + 0.3 * x.sin()),
        ] {
            let m = DiffusionModel::new(2.0, -0.2, h).unwrap();
            let s = build_stationary(&m, DEFAULT_TOL).unwrap();
            let total = s.expect(|_| 1.0).unwrap();
            assert!((total - 1.0).abs() < 1e-9, "{}: {total}", m.h().describe());
            assert!(s.decreasing_past_mode(500));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let s = half_normal_case();
        for i in 1..40 {
            let x = 0.05 * i as f64;
            let q = s.cdf(x);
            assert!((s.quantile(q).unwrap() - x).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let s = exponential_case();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, 2.0, 4).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,density,cdf");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("0,2"));
    }
}
