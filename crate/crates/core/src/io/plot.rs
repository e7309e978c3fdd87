//! SVG overlay of ground truth (top) and extracted signal (bottom).

use std::fmt::Write as _;
use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::signal::Signal;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 50.0;

fn panel(svg: &mut String, s: &Signal, top: f64, title: &str, color: &str) {
    let x = s.samples();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let dx = if x.len() > 1 { plot_w / (x.len() - 1) as f64 } else { 0.0 };
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="grey"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN_L}" y="{}" font-size="14">{title}</text>"#, top - 8.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{hi:.3}</text>"#,
        MARGIN_L - 4.0,
        top + 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{lo:.3}</text>"#,
        MARGIN_L - 4.0,
        top + PANEL_H
    );
    let _ = write!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1" points=""#);
    for (i, v) in x.iter().enumerate() {
        if i > 0 {
            svg.push(' ');
        }
        let px = MARGIN_L + i as f64 * dx;
        let py = top + PANEL_H - (v - lo) / span * PANEL_H;
        let _ = write!(svg, "{px:.2},{py:.2}");
    }
    svg.push_str("\"/>\n");
}

/// Two stacked panels on a shared time axis.
pub fn render_plot(truth: &Signal, extracted: &Signal) -> Result<String> {
    if truth.is_empty() || extracted.is_empty() {
        return Err(Error::EmptySignal);
    }
    if truth.len() != extracted.len() || truth.sample_rate_hz() != extracted.sample_rate_hz() {
        return Err(Error::shape(format!(
            "truth has {} samples at {} Hz, extracted {} at {} Hz",
            truth.len(),
            truth.sample_rate_hz(),
            extracted.len(),
            extracted.sample_rate_hz()
        )));
    }
    let height = MARGIN_T + 2.0 * PANEL_H + GAP + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    panel(&mut svg, truth, MARGIN_T, "Ground truth", "#1f4e9c");
    panel(&mut svg, extracted, MARGIN_T + PANEL_H + GAP, "Extracted fECG", "#c0392b");
    let axis_y = MARGIN_T + 2.0 * PANEL_H + GAP + 20.0;
    let _ = writeln!(svg, r#"<text x="{MARGIN_L}" y="{axis_y}" font-size="11">0 s</text>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{axis_y}" font-size="11" text-anchor="end">{:.3} s</text>"#,
        WIDTH - MARGIN_R,
        truth.duration_s()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{axis_y}" font-size="12" text-anchor="middle">time</text>"#,
        WIDTH / 2.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(truth: &Signal, extracted: &Signal, path: &Path) -> Result<()> {
    atomic_write(path, render_plot(truth, extracted)?.as_bytes())
}
