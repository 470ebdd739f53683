//! Minimal SVG line plots and heatmaps.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        }
    }
}

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

fn bounds(v: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() {
        return None;
    }
    if hi > lo {
        Some((lo, hi))
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        Some((lo - pad, hi + pad))
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let cy = (TOP + H - BOTTOM) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{}</text>"#,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, scale: Scale) -> String {
    let v = match scale {
        Scale::Linear => v,
        Scale::Log => 10f64.powf(v),
    };
    format!("{v:.3e}")
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), xs: Scale, ys: Scale) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = x0 + f * (x1 - x0);
        let py = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            tick_label(x.0 + f * (x.1 - x.0), xs)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            py + 4.0,
            tick_label(y.0 + f * (y.1 - y.0), ys)
        );
    }
}

/// One polyline through (x, y). Non-finite points, and non-positive ones on
/// log axes, break the line.
pub fn line_svg(plot: &LinePlot, x: &[f64], y: &[f64]) -> String {
    let pts: Vec<Option<(f64, f64)>> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let ok = |v: f64, s: Scale| v.is_finite() && (s == Scale::Linear || v > 0.0);
            (ok(a, plot.x_scale) && ok(b, plot.y_scale)).then(|| (plot.x_scale.map(a), plot.y_scale.map(b)))
        })
        .collect();
    let mut out = String::new();
    header(&mut out, plot.title, plot.x_label, plot.y_label);
    let xb = bounds(pts.iter().flatten().map(|p| p.0));
    let yb = bounds(pts.iter().flatten().map(|p| p.1));
    if let (Some(xb), Some(yb)) = (xb, yb) {
        axes(&mut out, xb, yb, plot.x_scale, plot.y_scale);
        let px = |v: f64| LEFT + (v - xb.0) / (xb.1 - xb.0) * (W - LEFT - RIGHT);
        let py = |v: f64| H - BOTTOM - (v - yb.0) / (yb.1 - yb.0) * (H - TOP - BOTTOM);
        for run in pts.split(|p| p.is_none()).filter(|r| !r.is_empty()) {
            let d: Vec<String> = run
                .iter()
                .flatten()
                .map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
                d.join(" ")
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of `z[i][j]` over rows `y[i]` and columns `x[j]`, colour on a
/// log10 scale. Non-finite cells are grey.
pub fn heatmap_svg(title: &str, x_label: &str, y_label: &str, x: &[f64], y: &[f64], z: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    let zb = bounds(z.iter().flatten().filter(|v| **v > 0.0).map(|v| v.log10()));
    let (nx, ny) = (x.len(), y.len());
    if nx > 0 && ny > 0 {
        let xb = bounds(x.iter().map(|v| v.log10())).unwrap_or((0.0, 1.0));
        let yb = bounds(y.iter().map(|v| v.log10())).unwrap_or((0.0, 1.0));
        let cw = (W - LEFT - RIGHT) / nx as f64;
        let ch = (H - TOP - BOTTOM) / ny as f64;
        for (i, row) in z.iter().enumerate().take(ny) {
            for (j, &v) in row.iter().enumerate().take(nx) {
                let fill = match zb {
                    Some((lo, hi)) if v > 0.0 && v.is_finite() => colour((v.log10() - lo) / (hi - lo)),
                    _ => "#999999".to_string(),
                };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    LEFT + j as f64 * cw,
                    H - BOTTOM - (i + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
        axes(&mut out, xb, yb, Scale::Log, Scale::Log);
    }
    out.push_str("</svg>\n");
    out
}

/// Dark blue (0) to yellow (1).
fn colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(30.0, 250.0),
        lerp(30.0, 220.0),
        lerp(120.0, 40.0)
    )
}
