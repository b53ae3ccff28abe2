//! Learning-curve SVG: timestep against mean evaluation return.

use std::fmt::Write as _;
use std::path::Path;

use super::config::parse_entries;
use super::metrics::{read_metrics, MetricsRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Curve {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

/// Legend label from a sibling `config.resolved`, else the file name.
pub fn curve_label(metrics: &Path) -> String {
    let resolved = metrics.with_file_name("config.resolved");
    if let Ok(text) = std::fs::read_to_string(&resolved) {
        if let Ok(entries) = parse_entries(&text) {
            let get = |k: &str| entries.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
            if let (Some(algo), Some(scenario)) = (get("algo"), get("scenario")) {
                let mut label = format!("{algo} on {scenario}");
                if algo == "facmac" {
                    for key in ["mixer", "sharing"] {
                        if let Some(v) = get(key) {
                            label.push_str(&format!(" {v}"));
                        }
                    }
                }
                if let Some(seed) = get("seed") {
                    label.push_str(&format!(" (seed {seed})"));
                }
                return label;
            }
        }
    }
    metrics
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| metrics.display().to_string())
}

pub fn load_curves(paths: &[&Path]) -> Result<Vec<Curve>> {
    if paths.is_empty() {
        return Err(Error::Input("plot needs at least one metrics file".into()));
    }
    paths
        .iter()
        .map(|p| {
            Ok(Curve {
                label: curve_label(p),
                rows: read_metrics(p)?,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Pure function of its input: identical curves give identical bytes.
pub fn render_svg(curves: &[Curve]) -> String {
    let points = curves.iter().flat_map(|c| c.rows.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in points {
        x0 = x0.min(r.timestep as f64);
        x1 = x1.max(r.timestep as f64);
        y0 = y0.min(r.mean_return);
        y1 = y1.max(r.mean_return);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = span(x0, x1);
    let (y0, y1) = span(y0, y1);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left:.1} {top:.1} L{left:.1} {bottom:.1} L{right:.1} {bottom:.1}" stroke="black" fill="none"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#,
            bottom + 5.0,
            bottom + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">timestep</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">mean return</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = c
            .rows
            .iter()
            .enumerate()
            .map(|(j, r)| format!("{}{:.2} {:.2}", if j == 0 { "M" } else { "L" }, sx(r.timestep as f64), sy(r.mean_return)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, path.join(" "));
        }
        for r in &c.rows {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                sx(r.timestep as f64),
                sy(r.mean_return)
            );
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{:.1}" y="{:.1}" width="12" height="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
            right - 230.0,
            ly - 4.0,
            right - 212.0,
            ly,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_plot(metrics: &[&Path], out: &Path) -> Result<()> {
    let svg = render_svg(&load_curves(metrics)?);
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
