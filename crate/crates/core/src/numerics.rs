//! Quadrature, compensated summation and monotone root finding shared by
//! the patience, diffusion and simulator modules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Result of a quadrature call: value and an a-posteriori error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Panels are always split at least this many times, so that periodic
/// integrands cannot fake convergence on the coarsest levels.
const MIN_SIMPSON_DEPTH: u32 = 5;

/// Adaptive Simpson quadrature on `[a, b]` with an absolute tolerance and a
/// cap on the number of interval subdivisions.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    struct Panel {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    }

    let simpson = |a: f64, b: f64, fa: f64, fm: f64, fb: f64| (b - a) / 6.0 * (fa + 4.0 * fm + fb);

    let fa = f(lo);
    let fb = f(hi);
    let fm = f(0.5 * (lo + hi));
    let mut stack =
        vec![Panel { a: lo, b: hi, fa, fm, fb, whole: simpson(lo, hi, fa, fm, fb), tol: abs_tol, depth: 0 }];
    let mut total = KahanSum::new();
    let mut err_total = 0.0;
    let mut subdivisions = 0usize;

    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        let converged = (p.depth >= MIN_SIMPSON_DEPTH && delta.abs() <= 15.0 * p.tol)
            || p.depth >= 60
            || (m - p.a) <= f64::EPSILON * m.abs();
        if converged {
            total.add(left + right + delta / 15.0);
            err_total += delta.abs() / 15.0;
            continue;
        }
        subdivisions += 1;
        if subdivisions > max_subdivisions {
            return Err(Error::Quadrature(format!(
                "adaptive Simpson on [{lo}, {hi}] exceeded {max_subdivisions} subdivisions"
            )));
        }
        let tol = 0.5 * p.tol;
        stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol, depth: p.depth + 1 });
        stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol, depth: p.depth + 1 });
    }

    let value = sign * total.value();
    if !value.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integral on [{lo}, {hi}]")));
    }
    Ok(Quadrature { value, error: err_total })
}

// Gauss-Kronrod 7/15 nodes and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One 15-point Kronrod panel with the embedded 7-point Gauss estimate
/// used as the error indicator.
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quadrature {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Quadrature { value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

struct GkPanel {
    a: f64,
    b: f64,
    q: Quadrature,
}

impl PartialEq for GkPanel {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for GkPanel {}
impl PartialOrd for GkPanel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for GkPanel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

const ROUNDOFF_STALLS: u32 = 20;

/// Globally adaptive Gauss-Kronrod quadrature over the panels delimited by
/// `breaks` (sorted). Bisects the worst panel until the summed error is
/// below `max(abs_tol, rel_tol * |value|)`. Stops early, returning its own
/// error estimate, when repeated splits show the target is below the
/// integrand's roundoff level.
pub fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Quadrature> {
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(GkPanel { a: w[0], b: w[1], q: gauss_kronrod_15(f, w[0], w[1]) });
        }
    }
    let exact_totals = |heap: &BinaryHeap<GkPanel>| {
        let mut value = KahanSum::new();
        let mut error = KahanSum::new();
        for p in heap.iter() {
            value.add(p.q.value);
            error.add(p.q.error);
        }
        (value.value(), error.value())
    };
    // Running totals drive the loop; convergence is confirmed on exact sums.
    let (mut value, mut error) = exact_totals(&heap);
    let mut stalled_splits = 0u32;
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature("non-finite Gauss-Kronrod sum".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            let (v, e) = exact_totals(&heap);
            if e <= abs_tol.max(rel_tol * v.abs()) {
                return Ok(Quadrature { value: v, error: e });
            }
            value = v;
            error = e;
        }
        if heap.len() >= max_panels {
            return Err(Error::Quadrature(format!(
                "Gauss-Kronrod did not converge within {max_panels} panels (error {error:e})"
            )));
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => return Ok(Quadrature { value, error }),
        };
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel cannot be split further; accept what we have.
            heap.push(worst);
            let (value, error) = exact_totals(&heap);
            return Ok(Quadrature { value, error });
        }
        let left = gauss_kronrod_15(f, worst.a, m);
        let right = gauss_kronrod_15(f, m, worst.b);
        // Splitting that neither moves the value nor shrinks the error means
        // the integrand is resolved down to its own evaluation noise.
        let children = left.value + right.value;
        if (children - worst.q.value).abs() <= 1e-5 * children.abs() && left.error + right.error >= 0.99 * worst.q.error
        {
            stalled_splits += 1;
        }
        value += left.value + right.value - worst.q.value;
        error = (error + left.error + right.error - worst.q.error).max(0.0);
        heap.push(GkPanel { a: worst.a, b: m, q: left });
        heap.push(GkPanel { a: m, b: worst.b, q: right });
        if stalled_splits >= ROUNDOFF_STALLS {
            let (value, error) = exact_totals(&heap);
            return Ok(Quadrature { value, error });
        }
    }
}

/// Smallest `x >= 0` with `f(x) >= target` for a non-decreasing `f`, returned
/// from below: the result `x` satisfies `f(x) < target` unless `f(0) >= target`,
/// and `x + tol` lies past the crossing. Returns `None` when `f` stays below
/// `target` up to `x_limit`.
pub fn monotone_lower_crossing<F: Fn(f64) -> f64>(f: F, target: f64, tol: f64, x_limit: f64) -> Option<f64> {
    if f(0.0) >= target {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > x_limit {
            if f(x_limit) < target {
                return None;
            }
            hi = x_limit;
            break;
        }
    }
    for _ in 0..200 {
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(lo)
}
