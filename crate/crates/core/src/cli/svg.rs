//! Minimal self-contained SVG charts.

use std::fmt::Write;

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Mean curve with a ±std band.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn frame(out: &mut String, ax: &Axes, xlabel: &str, ylabel: &str, ytick: impl Fn(f64) -> String) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for i in 0..=4 {
        let fx = ax.x0 + (ax.x1 - ax.x0) * i as f64 / 4.0;
        let fy = ax.y0 + (ax.y1 - ax.y0) * i as f64 / 4.0;
        let (x, y) = (ax.px(fx), ax.py(fy));
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            b + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            b + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="black"/>"#,
            l - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 8.0,
            y + 4.0,
            ytick(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Best-so-far curves per method. Uses a log₁₀ axis when every mean is
/// positive; band lower edges are then floored at `mean/1000`.
pub fn convergence_svg(bands: &[Band]) -> Result<String> {
    if bands.is_empty()
        || bands
            .iter()
            .any(|b| b.mean.is_empty() || b.mean.len() != b.std.len())
    {
        return Err(Error::invalid(
            "convergence plot needs nonempty curves with matching std",
        ));
    }
    let log = bands.iter().all(|b| b.mean.iter().all(|&m| m > 0.0));
    let tf = |v: f64| if log { v.log10() } else { v };
    let edges = |b: &Band, i: usize| {
        let (m, s) = (b.mean[i], b.std[i]);
        let lo = if log { (m - s).max(m / 1000.0) } else { m - s };
        (tf(lo), tf(m + s))
    };
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    let mut n_max = 0;
    for b in bands {
        n_max = n_max.max(b.mean.len());
        for i in 0..b.mean.len() {
            let (lo, hi) = edges(b, i);
            y_lo = y_lo.min(lo);
            y_hi = y_hi.max(hi);
        }
    }
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        return Err(Error::invalid(
            "convergence curves contain non-finite values",
        ));
    }
    let (y0, y1) = padded(y_lo, y_hi);
    let ax = Axes {
        x0: 1.0,
        x1: (n_max as f64).max(2.0),
        y0,
        y1,
    };
    let mut out = String::new();
    header(&mut out, "Best objective value so far");
    let ylabel = if log { "best f (log10)" } else { "best f" };
    frame(&mut out, &ax, "evaluations", ylabel, |v| {
        if log {
            tick(10f64.powf(v))
        } else {
            tick(v)
        }
    });
    for (k, b) in bands.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let n = b.mean.len();
        let mut band: Vec<(f64, f64)> = (0..n)
            .map(|i| (ax.px((i + 1) as f64), ax.py(edges(b, i).1)))
            .collect();
        band.extend(
            (0..n)
                .rev()
                .map(|i| (ax.px((i + 1) as f64), ax.py(edges(b, i).0))),
        );
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            polyline(&band)
        );
        let line: Vec<(f64, f64)> = (0..n)
            .map(|i| (ax.px((i + 1) as f64), ax.py(tf(b.mean[i]))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            polyline(&line)
        );
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let lx = W - RIGHT - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&b.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Empirical CDF of the gaps with vertical markers at the certified bound
/// and the empirical `(1 − α)`-quantile.
pub fn cdf_svg(gaps: &[f64], bound: f64, quantile: f64, alpha: f64) -> Result<String> {
    if gaps.is_empty() {
        return Err(Error::invalid("CDF plot needs at least one gap"));
    }
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0].min(bound).min(quantile);
    let hi = sorted[sorted.len() - 1].max(bound).max(quantile);
    let (x0, x1) = padded(lo, hi);
    let ax = Axes {
        x0,
        x1,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    header(&mut out, "Empirical CDF of the performance gap");
    frame(&mut out, &ax, "gap", "empirical CDF", |v| format!("{v:.2}"));

    let m = sorted.len() as f64;
    let mut pts = vec![(ax.px(x0), ax.py(0.0))];
    for (i, &t) in sorted.iter().enumerate() {
        pts.push((ax.px(t), ax.py(i as f64 / m)));
        pts.push((ax.px(t), ax.py((i + 1) as f64 / m)));
    }
    pts.push((ax.px(x1), ax.py(1.0)));
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
        polyline(&pts),
        PALETTE[0]
    );
    let level = 1.0 - alpha;
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="2,3"/>"##,
        LEFT,
        W - RIGHT,
        y = ax.py(level)
    );
    for (k, (v, label)) in [(bound, "certified bound"), (quantile, "empirical quantile")]
        .into_iter()
        .enumerate()
    {
        let color = PALETTE[1 + k];
        let x = ax.px(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="6,4"/>"#,
            TOP,
            H - BOTTOM
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{label} = {}</text>"#,
            LEFT + 10.0,
            TOP + 16.0 + 16.0 * k as f64,
            tick(v)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
