use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use super::function::{PiecewiseLinear, ScalarFn};
use crate::error::{Error, Result};
use crate::numerics::monotone_lower_crossing;

/// Search limit for numeric inversion of patience CDFs.
const INVERSE_X_LIMIT: f64 = 1e15;
const INVERSE_REL_TOL: f64 = 1e-15;

/// Unscaled patience law; the same CDF is used at every scale index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatienceDist {
    Exponential {
        rate: f64,
    },
    /// Uniform on `[0, upper]`.
    Uniform {
        upper: f64,
    },
    /// `F(x) = 1 - exp(-(x/scale)^shape)`, `shape >= 1` so that `F'(0)` is finite.
    Weibull {
        shape: f64,
        scale: f64,
    },
}

impl PatienceDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PatienceDist::Exponential { rate } => rate.is_finite() && rate > 0.0,
            PatienceDist::Uniform { upper } => upper.is_finite() && upper > 0.0,
            PatienceDist::Weibull { shape, scale } => {
                shape.is_finite() && shape >= 1.0 && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid unscaled patience law {self:?}")))
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            PatienceDist::Exponential { rate } => -(-rate * x).exp_m1(),
            PatienceDist::Uniform { upper } => (x / upper).min(1.0),
            PatienceDist::Weibull { shape, scale } => -(-(x / scale).powf(shape)).exp_m1(),
        }
    }

    fn inverse(&self, u: f64) -> f64 {
        match *self {
            PatienceDist::Exponential { rate } => -(-u).ln_1p() / rate,
            PatienceDist::Uniform { upper } => u * upper,
            PatienceDist::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
        }
    }

    /// `F'(0)`, the slope of the limiting function `H(x) = F'(0) x`.
    pub fn density_at_zero(&self) -> f64 {
        match *self {
            PatienceDist::Exponential { rate } => rate,
            PatienceDist::Uniform { upper } => 1.0 / upper,
            PatienceDist::Weibull { shape, scale } => {
                if shape == 1.0 {
                    1.0 / scale
                } else {
                    0.0
                }
            }
        }
    }
}

/// Optional polynomial growth bound `sqrt(n) F^n(x/sqrt(n)) <= c (1 + x^m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub c: f64,
    pub m: f64,
}

/// Serializable description of a patience family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PatienceKind {
    /// `F^n = F` for all `n`; `H(x) = F'(0) x`.
    Unscaled { dist: PatienceDist },
    /// `F^n(x) = 1 - exp(-int_0^x h(sqrt(n) u) du)`; `H = int h`.
    HazardScaled { h: ScalarFn },
    /// `F^n(x) = min{H(sqrt(n) x), sqrt(n)} / sqrt(n)`.
    CappedH { limit: ScalarFn },
    /// Tabulated unscaled CDF, either inline or from a two-column CSV.
    /// `H` defaults to `F'(0) x` estimated from the first table segment.
    ExternalTable {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<ScalarFn>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatienceSpec {
    #[serde(flatten)]
    pub kind: PatienceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<Growth>,
}

#[derive(Debug, Clone)]
pub enum PatienceVariant {
    Unscaled(PatienceDist),
    HazardScaled(ScalarFn),
    CappedH,
    ExternalTable(PiecewiseLinear),
}

/// A family `{F^n}` of patience CDFs together with its limiting function `H`.
#[derive(Debug, Clone)]
pub struct PatienceFamily {
    variant: PatienceVariant,
    limit: ScalarFn,
    growth: Option<Growth>,
}

impl<'de> Deserialize<'de> for PatienceFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = PatienceSpec::deserialize(d)?;
        PatienceFamily::from_spec(&spec, None).map_err(serde::de::Error::custom)
    }
}

impl Serialize for PatienceFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl PatienceFamily {
    /// Builds and validates a family. Relative table paths resolve against `base_dir`.
    pub fn from_spec(spec: &PatienceSpec, base_dir: Option<&Path>) -> Result<Self> {
        let fam = match &spec.kind {
            PatienceKind::Unscaled { dist } => PatienceFamily::unscaled(dist.clone()),
            PatienceKind::HazardScaled { h } => PatienceFamily::hazard_scaled(h.clone()),
            PatienceKind::CappedH { limit } => PatienceFamily::capped(limit.clone()),
            PatienceKind::ExternalTable { path, x, f, limit } => {
                let table = match (path, x, f) {
                    (Some(p), None, None) => {
                        let full = match base_dir {
                            Some(b) if p.is_relative() => b.join(p),
                            _ => p.clone(),
                        };
                        let file = std::fs::File::open(&full).map_err(|e| {
                            Error::config(format!("cannot open patience table {}: {e}", full.display()))
                        })?;
                        PiecewiseLinear::from_csv_reader(file)?
                    }
                    (None, Some(x), Some(f)) => PiecewiseLinear::new(x.clone(), f.clone())?,
                    _ => return Err(Error::config("external_table needs either `path` or both `x` and `f`")),
                };
                PatienceFamily::external_table(table, limit.clone())
            }
        };
        let fam = match spec.growth {
            Some(g) => fam.with_growth(g),
            None => fam,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn to_spec(&self) -> PatienceSpec {
        let kind = match &self.variant {
            PatienceVariant::Unscaled(d) => PatienceKind::Unscaled { dist: d.clone() },
            PatienceVariant::HazardScaled(h) => PatienceKind::HazardScaled { h: h.clone() },
            PatienceVariant::CappedH => PatienceKind::CappedH { limit: self.limit.clone() },
            PatienceVariant::ExternalTable(t) => PatienceKind::ExternalTable {
                path: None,
                x: Some(t.xs().to_vec()),
                f: Some(t.ys().to_vec()),
                limit: Some(self.limit.clone()),
            },
        };
        PatienceSpec { kind, growth: self.growth }
    }

    pub fn unscaled(dist: PatienceDist) -> Self {
        let limit = ScalarFn::linear(dist.density_at_zero());
        PatienceFamily { variant: PatienceVariant::Unscaled(dist), limit, growth: None }
    }

    pub fn hazard_scaled(h: ScalarFn) -> Self {
        let limit = h.antiderivative();
        PatienceFamily { variant: PatienceVariant::HazardScaled(h), limit, growth: None }
    }

    pub fn capped(limit: ScalarFn) -> Self {
        PatienceFamily { variant: PatienceVariant::CappedH, limit, growth: None }
    }

    pub fn external_table(table: PiecewiseLinear, limit: Option<ScalarFn>) -> Self {
        let limit = limit.unwrap_or_else(|| {
            let (x, y) = (table.xs(), table.ys());
            let slope = if x[0] == 0.0 && x.len() > 1 { (y[1] - y[0]) / (x[1] - x[0]) } else { 0.0 };
            ScalarFn::linear(slope)
        });
        PatienceFamily { variant: PatienceVariant::ExternalTable(table), limit, growth: None }
    }

    /// Infinitely patient customers: `F^n = 0`, `H = 0`.
    pub fn no_abandonment() -> Self {
        PatienceFamily::hazard_scaled(ScalarFn::zero())
    }

    pub fn with_growth(mut self, g: Growth) -> Self {
        self.growth = Some(g);
        self
    }

    pub fn variant(&self) -> &PatienceVariant {
        &self.variant
    }

    /// The limiting function `H`.
    pub fn limit(&self) -> &ScalarFn {
        &self.limit
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    /// Structural checks: `H(0) = 0`, `H >= 0`, and each `F^n` a CDF with
    /// `F^n(0) = 0`, sampled on `[0, 20]`.
    pub fn validate(&self) -> Result<()> {
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        match &self.variant {
            PatienceVariant::Unscaled(d) => d.validate()?,
            PatienceVariant::HazardScaled(h) => {
                if let Some(x) = grid.iter().find(|&&x| !(h.eval(x) >= 0.0)) {
                    return Err(Error::config(format!("hazard rate negative or undefined at {x}")));
                }
            }
            PatienceVariant::CappedH => {
                if grid.windows(2).any(|w| self.limit.eval(w[1]) < self.limit.eval(w[0])) {
                    return Err(Error::config("capped family needs a non-decreasing H"));
                }
            }
            PatienceVariant::ExternalTable(t) => {
                if !t.is_non_decreasing() || t.ys().iter().any(|&y| !(0.0..=1.0).contains(&y)) {
                    return Err(Error::config("patience table must be non-decreasing with values in [0, 1]"));
                }
                if t.eval(0.0) != 0.0 {
                    return Err(Error::config("patience table must satisfy F(0) = 0"));
                }
            }
        }
        let h0 = self.limit.eval(0.0);
        if !(h0.abs() <= 1e-12) {
            return Err(Error::config(format!("limiting function has H(0) = {h0}, expected 0")));
        }
        if let Some(x) = grid.iter().find(|&&x| !(self.limit.eval(x) >= 0.0)) {
            return Err(Error::config(format!("limiting function negative or undefined at {x}")));
        }
        if let Some(g) = self.growth {
            if !(g.c > 0.0 && g.m > 0.0 && g.c.is_finite() && g.m.is_finite()) {
                return Err(Error::config(format!("growth constants must be positive, got {g:?}")));
            }
        }
        for n in [1u64, 100, 10_000] {
            let mut prev = 0.0;
            for &x in &grid {
                let v = self.cdf(n, x)?;
                // quadrature-backed families carry ~1e-10 noise
                if !(0.0..=1.0).contains(&v) || v < prev - 1e-9 {
                    return Err(Error::config(format!("F^{n} is not a CDF near x = {x} (value {v})")));
                }
                prev = v;
            }
        }
        Ok(())
    }

    /// `F^n(x)`.
    pub fn cdf(&self, n: u64, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Ok(0.0);
        }
        let sn = (n as f64).sqrt();
        let v = match &self.variant {
            PatienceVariant::Unscaled(d) => d.cdf(x),
            PatienceVariant::HazardScaled(h) => {
                // int_0^x h(sqrt(n) u) du = (1/sqrt(n)) int_0^{sqrt(n) x} h
                let cum = if x.is_infinite() {
                    if h.is_identically_zero() {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    h.integral(sn * x)? / sn
                };
                -(-cum).exp_m1()
            }
            PatienceVariant::CappedH => {
                if x.is_infinite() {
                    1.0
                } else {
                    self.limit.eval(sn * x).min(sn) / sn
                }
            }
            PatienceVariant::ExternalTable(t) => t.eval(x),
        };
        if v.is_nan() {
            return Err(Error::Quadrature(format!("F^{n}({x}) evaluated to NaN")));
        }
        Ok(v)
    }

    /// `sqrt(n) F^n(x / sqrt(n))`, the quantity converging to `H(x)`.
    pub fn scaled_cdf(&self, n: u64, x: f64) -> Result<f64> {
        let sn = (n as f64).sqrt();
        Ok(sn * self.cdf(n, x / sn)?)
    }

    /// Generalized inverse `inf{x : F^n(x) >= u}`; `+inf` when `u` exceeds
    /// every value of `F^n`.
    pub fn inverse_cdf(&self, n: u64, u: f64) -> f64 {
        if !(u > 0.0) {
            return 0.0;
        }
        let sn = (n as f64).sqrt();
        match &self.variant {
            PatienceVariant::Unscaled(d) => d.inverse(u),
            PatienceVariant::HazardScaled(h) => {
                let target = -(-u).ln_1p() * sn;
                let y = match h {
                    ScalarFn::Polynomial(c) if c.len() == 1 => {
                        if c[0] > 0.0 {
                            Some(target / c[0])
                        } else {
                            None
                        }
                    }
                    ScalarFn::Power { coef, exponent } if *coef > 0.0 => {
                        Some((target * (exponent + 1.0) / coef).powf(1.0 / (exponent + 1.0)))
                    }
                    _ if h.is_identically_zero() => None,
                    _ => monotone_lower_crossing(
                        |y| h.integral(y).unwrap_or(f64::NAN),
                        target,
                        INVERSE_REL_TOL,
                        INVERSE_X_LIMIT,
                    ),
                };
                y.map_or(f64::INFINITY, |y| y / sn)
            }
            PatienceVariant::CappedH => {
                let target = sn * u;
                let y = match &self.limit {
                    ScalarFn::Polynomial(c) if c.len() == 2 && c[0] == 0.0 && c[1] > 0.0 => Some(target / c[1]),
                    ScalarFn::Power { coef, exponent } if *coef > 0.0 && *exponent > 0.0 => {
                        Some((target / coef).powf(1.0 / exponent))
                    }
                    lim => monotone_lower_crossing(|y| lim.eval(y), target, INVERSE_REL_TOL, INVERSE_X_LIMIT),
                };
                y.map_or(f64::INFINITY, |y| y / sn)
            }
            PatienceVariant::ExternalTable(t) => t.inverse(u).unwrap_or(f64::INFINITY),
        }
    }

    /// Inverse-transform draw of a patience time from `F^n`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.inverse_cdf(n, u)
    }
}
