use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::adaptive_simpson;

/// Absolute tolerance and subdivision cap for integrals without a closed form.
pub const QUAD_ABS_TOL: f64 = 1e-10;
pub const QUAD_MAX_SUBDIVISIONS: usize = 1_000_000;

/// Monotone-x piecewise-linear function, clamped to the end values outside
/// the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct PiecewiseLinear {
    x: Vec<f64>,
    y: Vec<f64>,
    // Running trapezoid integral from x[0] to x[i].
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TryFrom<TableRepr> for PiecewiseLinear {
    type Error = Error;
    fn try_from(t: TableRepr) -> Result<Self> {
        PiecewiseLinear::new(t.x, t.y)
    }
}

impl From<PiecewiseLinear> for TableRepr {
    fn from(t: PiecewiseLinear) -> Self {
        TableRepr { x: t.x, y: t.y }
    }
}

impl PiecewiseLinear {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::config("table needs equally many (>0) x and y values"));
        }
        if x[0] < 0.0 || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::config("table values must be finite with x >= 0"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("table x values must be strictly increasing"));
        }
        let mut cumulative = Vec::with_capacity(x.len());
        cumulative.push(0.0);
        for i in 1..x.len() {
            let prev = cumulative[i - 1];
            cumulative.push(prev + 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]));
        }
        Ok(PiecewiseLinear { x, y, cumulative })
    }

    /// Reads a headerless or headed two-column CSV of `(x, y)` rows.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::config(format!("table row {} has fewer than two columns", line + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    x.push(a);
                    y.push(b);
                }
                // Tolerate a single header line.
                _ if line == 0 => continue,
                _ => return Err(Error::config(format!("table row {} is not numeric", line + 1))),
            }
        }
        PiecewiseLinear::new(x, y)
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t);
        let (x0, x1, y0, y1) = (self.x[i - 1], self.x[i], self.y[i - 1], self.y[i]);
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }

    /// `int_0^t` of the clamped interpolant.
    pub fn integral(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] * t;
        }
        let head = self.y[0] * self.x[0];
        if t >= self.x[n - 1] {
            return head + self.cumulative[n - 1] + self.y[n - 1] * (t - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&v| v <= t);
        let yt = self.eval(t);
        head + self.cumulative[i - 1] + 0.5 * (self.y[i - 1] + yt) * (t - self.x[i - 1])
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] >= w[0])
    }

    /// Generalized inverse `inf{t >= 0 : eval(t) >= u}` of a non-decreasing
    /// table; `None` when `u` exceeds the last value.
    pub fn inverse(&self, u: f64) -> Option<f64> {
        if u <= self.y[0] {
            return Some(0.0);
        }
        let n = self.y.len();
        if u > self.y[n - 1] {
            return None;
        }
        let i = self.y.partition_point(|&v| v < u);
        let (x0, x1, y0, y1) = (self.x[i - 1], self.x[i], self.y[i - 1], self.y[i]);
        Some(x0 + (x1 - x0) * (u - y0) / (y1 - y0))
    }
}

/// A user-supplied closure. Not serializable.
#[derive(Clone)]
pub struct CustomFn {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomFn({})", self.name)
    }
}

/// A real function on `[0, inf)`, used for hazard rates `h` and limiting
/// drift functions `H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFn {
    /// `c[0] + c[1] x + c[2] x^2 + ...`
    Polynomial(Vec<f64>),
    /// `coef * x^exponent`
    Power {
        coef: f64,
        exponent: f64,
    },
    Table(PiecewiseLinear),
    #[serde(skip)]
    Custom(CustomFn),
}

impl ScalarFn {
    pub fn constant(c: f64) -> Self {
        ScalarFn::Polynomial(vec![c])
    }

    pub fn linear(slope: f64) -> Self {
        ScalarFn::Polynomial(vec![0.0, slope])
    }

    pub fn zero() -> Self {
        ScalarFn::Polynomial(vec![0.0])
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Custom(CustomFn { name: name.into(), f: Arc::new(f) })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            ScalarFn::Power { coef, exponent } => coef * x.powf(*exponent),
            ScalarFn::Table(t) => t.eval(x),
            ScalarFn::Custom(c) => (c.f)(x),
        }
    }

    /// `int_0^x` in closed form, when one exists.
    pub fn integral_closed(&self, x: f64) -> Option<f64> {
        match self {
            ScalarFn::Polynomial(c) => {
                Some(c.iter().enumerate().rev().fold(0.0, |acc, (k, &ck)| acc * x + ck / (k as f64 + 1.0)) * x)
            }
            ScalarFn::Power { coef, exponent } => Some(coef * x.powf(exponent + 1.0) / (exponent + 1.0)),
            ScalarFn::Table(t) => Some(t.integral(x)),
            ScalarFn::Custom(_) => None,
        }
    }

    pub fn has_closed_integral(&self) -> bool {
        !matches!(self, ScalarFn::Custom(_))
    }

    /// `int_0^x`, by closed form or adaptive Simpson.
    pub fn integral(&self, x: f64) -> Result<f64> {
        match self.integral_closed(x) {
            Some(v) => Ok(v),
            None => Ok(adaptive_simpson(|s| self.eval(s), 0.0, x, QUAD_ABS_TOL, QUAD_MAX_SUBDIVISIONS)?.value),
        }
    }

    /// The function `x -> int_0^x self`. Quadrature failures surface as NaN.
    pub fn antiderivative(&self) -> ScalarFn {
        match self {
            ScalarFn::Polynomial(c) => {
                let mut out = Vec::with_capacity(c.len() + 1);
                out.push(0.0);
                out.extend(c.iter().enumerate().map(|(k, &ck)| ck / (k as f64 + 1.0)));
                ScalarFn::Polynomial(out)
            }
            ScalarFn::Power { coef, exponent } => {
                ScalarFn::Power { coef: coef / (exponent + 1.0), exponent: exponent + 1.0 }
            }
            other => {
                let inner = other.clone();
                let name = format!("integral of {}", other.describe());
                ScalarFn::custom(name, move |x| inner.integral(x).unwrap_or(f64::NAN))
            }
        }
    }

    /// Derivative at zero from the right, where it has a closed form.
    pub fn slope_at_zero(&self) -> Option<f64> {
        match self {
            ScalarFn::Polynomial(c) => Some(c.get(1).copied().unwrap_or(0.0)),
            ScalarFn::Power { coef, exponent } if *exponent == 1.0 => Some(*coef),
            ScalarFn::Power { exponent, .. } if *exponent > 1.0 => Some(0.0),
            _ => None,
        }
    }

    /// True when the function is the zero polynomial.
    pub fn is_identically_zero(&self) -> bool {
        match self {
            ScalarFn::Polynomial(c) => c.iter().all(|&v| v == 0.0),
            ScalarFn::Power { coef, .. } => *coef == 0.0,
            ScalarFn::Table(t) => t.ys().iter().all(|&v| v == 0.0),
            ScalarFn::Custom(_) => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ScalarFn::Polynomial(c) => format!("polynomial{c:?}"),
            ScalarFn::Power { coef, exponent } => format!("{coef}*x^{exponent}"),
            ScalarFn::Table(t) => format!("table({} points)", t.xs().len()),
            ScalarFn::Custom(c) => c.name.clone(),
        }
    }
}
