use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::report::ConvergenceReport;
use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>
"#,
            W / 2.0,
            escape(title),
            LEFT + (W - LEFT - RIGHT) / 2.0,
            H - 12.0,
            escape(x_label),
            TOP + (H - TOP - BOTTOM) / 2.0,
            TOP + (H - TOP - BOTTOM) / 2.0,
            escape(y_label),
            W - LEFT - RIGHT,
            H - TOP - BOTTOM,
        );
        Canvas { body }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map of `[lo, hi]` onto a pixel range; a degenerate range is widened.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Axis { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn x_axis(lo: f64, hi: f64) -> Axis {
    Axis::new(lo, hi, LEFT, W - RIGHT)
}

fn y_axis(lo: f64, hi: f64) -> Axis {
    Axis::new(lo, hi, H - BOTTOM, TOP)
}

fn ticks(c: &mut Canvas, ax: Axis, horizontal: bool, count: usize, label: impl Fn(f64) -> String) {
    for i in 0..=count {
        let v = ax.lo + (ax.hi - ax.lo) * i as f64 / count as f64;
        let p = ax.map(v);
        if horizontal {
            let _ = writeln!(
                c.body,
                r#"<line x1="{p:.2}" y1="{}" x2="{p:.2}" y2="{}" stroke="black"/><text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#,
                H - BOTTOM,
                H - BOTTOM + 5.0,
                H - BOTTOM + 18.0,
                escape(&label(v))
            );
        } else {
            let _ = writeln!(
                c.body,
                r#"<line x1="{}" y1="{p:.2}" x2="{LEFT}" y2="{p:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                p + 4.0,
                escape(&label(v))
            );
        }
    }
}

fn legend(c: &mut Canvas, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = W - RIGHT - 170.0;
        let _ = writeln!(
            c.body,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(name)
        );
    }
}

fn polyline(c: &mut Canvas, pts: &[(f64, f64)], color: &str, markers: bool) {
    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ =
        writeln!(c.body, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
    if markers {
        for (x, y) in pts {
            let _ = writeln!(c.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        }
    }
}

/// Relative moment error against `n`, both axes logarithmic. Zero errors are
/// drawn at the smallest positive error of the plot.
pub fn error_vs_n_svg(report: &ConvergenceReport) -> String {
    let mut c = Canvas::new("Relative moment error vs n", "n (log scale)", "relative error (log scale)");
    let ns: Vec<f64> = report.rows.iter().map(|r| (r.n as f64).log10()).collect();
    let errs: Vec<f64> =
        report.rows.iter().flat_map(|r| r.moments.iter().map(|m| m.rel_err)).filter(|e| *e > 0.0).collect();
    let floor = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-6 };
    let ceil = errs.iter().copied().fold(floor, f64::max);
    let (ylo, yhi) = (floor.log10().floor(), ceil.log10().ceil().max(floor.log10().floor() + 1.0));
    let nlo = ns.first().copied().unwrap_or(0.0);
    let nhi = ns.last().copied().unwrap_or(1.0);
    let xa = x_axis(nlo - 0.1, nhi + 0.1);
    let ya = y_axis(ylo, yhi);
    ticks(&mut c, xa, true, 4, |v| format!("{:.0}", 10f64.powf(v)));
    ticks(&mut c, ya, false, (yhi - ylo) as usize, |v| format!("1e{v:.0}"));
    let mut entries = Vec::new();
    for (k, &m) in report.moment_orders.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .zip(&ns)
            .filter_map(|(r, &x)| r.moments.iter().find(|x| x.order == m).map(|mr| (x, mr.rel_err.max(floor).log10())))
            .map(|(x, y)| (xa.map(x), ya.map(y)))
            .collect();
        polyline(&mut c, &pts, color, true);
        entries.push((format!("m = {m}"), color));
    }
    legend(&mut c, &entries);
    c.finish()
}

/// Empirical CDF of `sqrt(n) V` at the largest `n` against the diffusion CDF,
/// annotated with the report's grid-KS value.
pub fn cdf_overlay_svg(report: &ConvergenceReport) -> String {
    let Some(last) = report.last_row() else {
        return Canvas::new("CDF overlay (no rows)", "x", "P(V <= x)").finish();
    };
    let mut c = Canvas::new(&format!("Scaled CDF at n = {}", last.n), "x", "P(sqrt(n) V <= x)");
    let g = &report.cdf_grid;
    let xa = x_axis(g.first().copied().unwrap_or(0.0), g.last().copied().unwrap_or(1.0));
    let ya = y_axis(0.0, 1.0);
    ticks(&mut c, xa, true, 5, |v| format!("{v:.2}"));
    ticks(&mut c, ya, false, 5, |v| format!("{v:.1}"));
    let sim: Vec<(f64, f64)> = g.iter().zip(&last.sim_cdf).map(|(&x, &y)| (xa.map(x), ya.map(y))).collect();
    let dif: Vec<(f64, f64)> = g.iter().zip(&report.diffusion.cdf).map(|(&x, &y)| (xa.map(x), ya.map(y))).collect();
    polyline(&mut c, &dif, COLORS[0], false);
    polyline(&mut c, &sim, COLORS[1], true);
    legend(&mut c, &[("diffusion".into(), COLORS[0]), (format!("simulation, n = {}", last.n), COLORS[1])]);
    let _ = writeln!(
        c.body,
        r#"<text x="{}" y="{}" class="ks">grid-KS = {}</text>"#,
        LEFT + 12.0,
        TOP + 20.0,
        last.grid_ks
    );
    c.finish()
}

/// `sqrt(n) P_a` with its CI next to `E[H(V)]` for each `n`.
pub fn abandonment_svg(report: &ConvergenceReport) -> String {
    let mut c = Canvas::new("sqrt(n) P_a vs E[H(V)]", "n", "value");
    let k = report.rows.len().max(1) as f64;
    let top = report
        .rows
        .iter()
        .map(|r| (r.sqrtn_pa.mean + r.sqrtn_pa.ci_half).max(r.expect_h))
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.15;
    let ya = y_axis(0.0, top);
    ticks(&mut c, ya, false, 5, |v| format!("{v:.3}"));
    let slot = (W - LEFT - RIGHT) / k;
    let bar = slot * 0.3;
    for (i, r) in report.rows.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.15;
        for (j, (v, color)) in [(r.sqrtn_pa.mean, COLORS[1]), (r.expect_h, COLORS[0])].iter().enumerate() {
            let x = x0 + j as f64 * bar;
            let y = ya.map(*v);
            let _ = writeln!(
                c.body,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                (H - BOTTOM - y).max(0.0)
            );
        }
        let cx = x0 + bar / 2.0;
        let (lo, hi) = (ya.map(r.sqrtn_pa.mean - r.sqrtn_pa.ci_half), ya.map(r.sqrtn_pa.mean + r.sqrtn_pa.ci_half));
        let _ = writeln!(c.body, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#);
        let _ = writeln!(
            c.body,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + bar,
            H - BOTTOM + 18.0,
            r.n
        );
    }
    legend(&mut c, &[("sqrt(n) P_a (3 SE)".into(), COLORS[1]), ("E[H(V)]".into(), COLORS[0])]);
    c.finish()
}

/// Writes `error_vs_n.svg`, `cdf_overlay.svg` and `abandonment.svg` into `dir`.
pub fn emit_plots(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("error_vs_n.svg", error_vs_n_svg(report)),
        ("cdf_overlay.svg", cdf_overlay_svg(report)),
        ("abandonment.svg", abandonment_svg(report)),
    ];
    let mut out = Vec::new();
    for (name, svg) in files {
        let p = dir.join(name);
        std::fs::write(&p, svg)?;
        out.push(p);
    }
    Ok(out)
}
