//! Self-contained SVG plots (inline styles, no scripts, no external fonts).

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 60.0;
const MR: f64 = 20.0;
const MT: f64 = 36.0;
const MB: f64 = 44.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Axis {
    #[default]
    Linear,
    Log,
}

/// A named polyline.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    xaxis: Axis,
    yaxis: Axis,
}

impl Frame {
    fn tx(&self, v: f64) -> f64 {
        let v = if self.xaxis == Axis::Log { v.log10() } else { v };
        ML + (v - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn ty(&self, v: f64) -> f64 {
        let v = if self.yaxis == Axis::Log { v.log10() } else { v };
        H - MB - (v - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn usable(v: f64, axis: Axis) -> bool {
    v.is_finite() && (axis == Axis::Linear || v > 0.0)
}

fn range(vals: impl Iterator<Item = f64>, axis: Axis) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|&v| usable(v, axis)) {
        let v = if axis == Axis::Log { v.log10() } else { v };
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, axis: Axis) -> String {
    let v = if axis == Axis::Log { 10f64.powf(v) } else { v };
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" style="background:#fff;font-family:sans-serif;font-size:11px">"#
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" style="font-size:14px">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = write!(
        out,
        r##"<rect x="{ML}" y="{MT}" width="{}" height="{}" style="fill:none;stroke:#444"/>"##,
        W - ML - MR,
        H - MT - MB
    );
    for k in 0..=4 {
        let u = k as f64 / 4.0;
        let xv = f.x0 + u * (f.x1 - f.x0);
        let yv = f.y0 + u * (f.y1 - f.y0);
        let px = ML + u * (W - ML - MR);
        let py = H - MB - u * (H - MT - MB);
        let _ = write!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            H - MB + 14.0,
            tick_label(xv, f.xaxis),
            ML - 4.0,
            py + 4.0,
            tick_label(yv, f.yaxis)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        W / 2.0,
        H - 8.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn polyline(out: &mut String, f: &Frame, s: &Series, color: &str) {
    let mut path = String::new();
    for &(x, y) in &s.points {
        if usable(x, f.xaxis) && usable(y, f.yaxis) {
            let _ = write!(path, "{:.2},{:.2} ", f.tx(x), f.ty(y));
        }
    }
    let _ = write!(
        out,
        r#"<polyline points="{}" style="fill:none;stroke:{color};stroke-width:1.5"/>"#,
        path.trim_end()
    );
}

fn legend(out: &mut String, names: &[(&str, &str)]) {
    for (k, (name, color)) in names.iter().enumerate() {
        let y = MT + 14.0 + 14.0 * k as f64;
        let _ = write!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" style="stroke:{color};stroke-width:2"/><text x="{}" y="{}">{}</text>"#,
            W - MR - 150.0,
            W - MR - 132.0,
            W - MR - 128.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// Line plot of several series.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], xaxis: Axis, yaxis: Axis) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), xaxis);
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), yaxis);
    let f = Frame {
        x0,
        x1,
        y0,
        y1,
        xaxis,
        yaxis,
    };
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel, &f);
    let mut names = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        polyline(&mut out, &f, s, c);
        names.push((s.name.as_str(), c));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Normalized histogram (unit area) of `samples` on `[lo, hi]` with an overlaid reference curve.
pub fn histogram(title: &str, xlabel: &str, samples: &[f64], lo: f64, hi: f64, bins: usize, reference: Option<&Series>) -> String {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        if s >= lo && s < hi {
            counts[(((s - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = samples.len().max(1) as f64;
    let heights: Vec<f64> = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    let ref_max = reference.map_or(0.0, |r| r.points.iter().map(|p| p.1).fold(0.0, f64::max));
    let top = heights.iter().cloned().fold(ref_max, f64::max).max(1e-12) * 1.08;
    let f = Frame {
        x0: lo,
        x1: hi,
        y0: 0.0,
        y1: top,
        xaxis: Axis::Linear,
        yaxis: Axis::Linear,
    };
    let mut out = String::new();
    header(&mut out, title, xlabel, "density", &f);
    for (k, &hgt) in heights.iter().enumerate() {
        let x = f.tx(lo + k as f64 * width);
        let y = f.ty(hgt);
        let _ = write!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" style="fill:#9ecae1;stroke:#3182bd;stroke-width:0.5"/>"#,
            f.tx(lo + (k + 1) as f64 * width) - x,
            f.ty(0.0) - y
        );
    }
    let mut names = vec![("samples", "#9ecae1")];
    if let Some(r) = reference {
        polyline(&mut out, &f, r, COLORS[1]);
        names.push((r.name.as_str(), COLORS[1]));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let s = Series::new("a<b", vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)]);
        let svg = line_plot("t", "x", "y", &[s.clone()], Axis::Linear, Axis::Log);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
        let h = histogram("h", "s", &[0.1, 0.2, 0.2, 0.9], 0.0, 1.0, 5, Some(&s));
        assert_eq!(h.matches("<rect").count(), 6);
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let svg = line_plot("t", "x", "y", &[Series::new("c", vec![(1.0, 1.0)])], Axis::Linear, Axis::Linear);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
