use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EvaluationReport, Metric};
use crate::error::{Error, Result};
use crate::imaging::NUM_LAYERS;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Vertical extent of a chart, also emitted as `data-y-min`/`data-y-max` on the root element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartAxis {
    pub y_min: f64,
    pub y_max: f64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv(r: &EvaluationReport) -> String {
    let mut out = String::from("layer,metric,raw,normalized,n_real,n_synth\n");
    for s in &r.per_layer {
        let norm = s.normalized.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", s.layer, s.metric, s.raw, norm, s.n_real, s.n_synth);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of one metric across layers, one series per report.
/// Plots normalized scores when every report has them, raw scores otherwise.
pub fn render_chart(metric: Metric, reports: &[&EvaluationReport]) -> (String, ChartAxis) {
    let normalized = reports
        .iter()
        .all(|r| r.per_layer.iter().filter(|s| s.metric == metric).all(|s| s.normalized.is_some()));
    let series: Vec<Vec<(u8, f64)>> = reports
        .iter()
        .map(|r| {
            r.per_layer
                .iter()
                .filter(|s| s.metric == metric)
                .map(|s| (s.layer.get(), if normalized { s.normalized.unwrap_or(s.raw) } else { s.raw }))
                .collect()
        })
        .collect();
    let values = series.iter().flatten().map(|p| p.1);
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = values.fold(f64::INFINITY, f64::min);
    let y_max = if max.is_finite() && max > 0.0 { max * 1.1 } else { 1.0 };
    let y_min = if min.is_finite() && min < 0.0 { min * 1.1 } else { 0.0 };
    let axis = ChartAxis { y_min, y_max };
    let kind = if normalized { "normalized" } else { "raw" };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |layer: u8| LEFT + (f64::from(layer) - 1.0) / f64::from(NUM_LAYERS - 1) * plot_w;
    let y_of = |v: f64| TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-metric="{metric}" data-y-kind="{kind}" data-y-min="{y_min}" data-y-max="{y_max}" data-x-min="1" data-x-max="{NUM_LAYERS}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{metric} by axial layer ({kind})</text>"#,
        LEFT + plot_w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/><line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/></g>"#,
        TOP + plot_h,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    for layer in 1..=NUM_LAYERS {
        let x = x_of(layer);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{layer}</text>"#,
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">layer</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * f64::from(i) / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.4}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (k, (pts, r)) in series.iter().zip(reports).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let label = escape(&format!("{} vs {}", r.set_synth, r.set_real));
        let path: Vec<String> = pts.iter().map(|&(l, v)| format!("{:.2},{:.2}", x_of(l), y_of(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}" data-series="{label}"/>"#,
            path.join(" ")
        );
        for &(l, v) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-layer="{l}" data-value="{v}"/>"#,
                x_of(l),
                y_of(v)
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="11" fill="{color}">{label}</text>"#,
            LEFT + plot_w + 12.0
        );
    }
    if series.iter().all(Vec::is_empty) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">no scores</text>"#,
            LEFT + plot_w / 2.0,
            TOP + plot_h / 2.0
        );
    }
    svg.push_str("</svg>\n");
    (svg, axis)
}

pub fn chart_file_name(metric: Metric) -> String {
    format!("{}.svg", metric.as_str().to_ascii_lowercase())
}

/// Writes `report.json`, `scores.csv` and one SVG chart per metric into `dir`.
pub fn export_report(r: &EvaluationReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    export_reports(&[r], dir)
}

/// Like [`export_report`] for several evaluations sharing one set of charts.
/// The first report is written as `report.json`/`scores.csv`, later ones as
/// `report-<k>.json`/`scores-<k>.csv`.
pub fn export_reports(reports: &[&EvaluationReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if reports.is_empty() {
        return Err(Error::invalid("no reports to export"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        let suffix = if k == 0 { String::new() } else { format!("-{k}") };
        let json = dir.join(format!("report{suffix}.json"));
        write_file(&json, &r.to_json())?;
        let scores = dir.join(format!("scores{suffix}.csv"));
        write_file(&scores, &csv(r))?;
        written.extend([json, scores]);
    }
    for metric in Metric::ALL {
        let (svg, _) = render_chart(metric, reports);
        let path = dir.join(chart_file_name(metric));
        write_file(&path, &svg)?;
        written.push(path);
    }
    Ok(written)
}
