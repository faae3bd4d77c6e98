//! Minimal SVG output: line/marker plots and a heatmap.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 460.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, markers: false }
    }

    pub fn scatter(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, markers: true }
    }
}

#[derive(Clone, Debug)]
pub struct Figure {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(out, r##"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##, x1 - x0, y1 - y0);
        for t in nice_ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(out, r##"<line x1="{p:.2}" y1="{y1}" x2="{p:.2}" y2="{:.1}" stroke="#333"/>"##, y1 + 5.0);
            let _ = writeln!(out, r#"<text x="{p:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, y1 + 19.0, tick_label(t));
        }
        for t in nice_ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(out, r##"<line x1="{:.1}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="#333"/>"##, x0 - 5.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, p + 4.0, tick_label(t));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (x0 + x1) / 2.0, escape(title));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 14.0, escape(xlabel));
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

impl Figure {
    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let frame = Frame { x: range(pts().map(|p| p.0)), y: range(pts().map(|p| p.1)) };
        let mut out = header();
        frame.axes(&mut out, &self.title, &self.xlabel, &self.ylabel);
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if s.markers {
                for &(x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, frame.px(x), frame.py(y));
                }
            } else {
                // non-finite values break the line
                for run in s.points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
                    if run.len() < 2 {
                        continue;
                    }
                    let d: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
                    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{}"/>"#, d.join(" "));
                }
            }
        }
        if self.series.len() <= 12 {
            for (k, s) in self.series.iter().enumerate() {
                let y = TOP + 14.0 + 18.0 * k as f64;
                let x = W - RIGHT + 14.0;
                let color = PALETTE[k % PALETTE.len()];
                let _ = writeln!(out, r#"<rect x="{x}" y="{:.1}" width="12" height="4" fill="{color}"/>"#, y - 6.0);
                let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{}</text>"#, x + 18.0, escape(&s.label));
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Diverging blue–white–red map, symmetric about zero.
fn diverging(v: f64, vmax: f64) -> (u8, u8, u8) {
    let t = (v / vmax).clamp(-1.0, 1.0);
    let blend = |a: f64, b: f64, f: f64| (a + (b - a) * f).round() as u8;
    if t >= 0.0 {
        (blend(255.0, 178.0, t), blend(255.0, 24.0, t), blend(255.0, 43.0, t))
    } else {
        (blend(255.0, 33.0, -t), blend(255.0, 102.0, -t), blend(255.0, 172.0, -t))
    }
}

/// Heatmap of `values` (row-major, `ys.len()` rows of `xs.len()` columns).
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], values: &[f64]) -> String {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(values.len(), nx * ny);
    let hx = if nx > 1 { (xs[1] - xs[0]) / 2.0 } else { 0.5 };
    let hy = if ny > 1 { (ys[1] - ys[0]) / 2.0 } else { 0.5 };
    let frame = Frame { x: (xs[0] - hx, xs[nx - 1] + hx), y: (ys[0] - hy, ys[ny - 1] + hy) };
    let vmax = values.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { m });
    let vmax = if vmax > 0.0 { vmax } else { 1.0 };
    let mut out = header();
    let cw = (frame.px(xs[0] + hx) - frame.px(xs[0] - hx)).abs();
    let ch = (frame.py(ys[0] - hy) - frame.py(ys[0] + hy)).abs();
    for iy in 0..ny {
        for ix in 0..nx {
            let (r, g, b) = diverging(values[iy * nx + ix], vmax);
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                frame.px(xs[ix] - hx),
                frame.py(ys[iy] + hy),
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    frame.axes(&mut out, title, xlabel, ylabel);
    let bar_x = W - RIGHT + 20.0;
    for k in 0..=40 {
        let v = vmax * (1.0 - k as f64 / 20.0);
        let (r, g, b) = diverging(v, vmax);
        let y = TOP + k as f64 * (H - TOP - BOTTOM) / 41.0;
        let _ = writeln!(out, r##"<rect x="{bar_x}" y="{y:.2}" width="16" height="{:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##, (H - TOP - BOTTOM) / 41.0 + 0.3);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bar_x + 22.0, TOP + 8.0, tick_label(vmax));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bar_x + 22.0, H - BOTTOM, tick_label(-vmax));
    out.push_str("</svg>\n");
    out
}
