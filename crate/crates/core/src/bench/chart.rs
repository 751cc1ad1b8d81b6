use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ReportRow;
use crate::error::{Error, Result};
use crate::retrieval::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart with one polyline and marker set per series.
/// Output depends only on the inputs.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::invalid("chart has no series"));
    }
    if let Some(s) = series.iter().find(|s| s.points.len() < 2) {
        return Err(Error::invalid(format!("series {:?} has fewer than 2 points", s.name)));
    }
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    if all().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("chart points must be finite"));
    }
    let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(x), b.max(x)));
    let (mut y0, mut y1) = all().fold((0.0f64, f64::NEG_INFINITY), |(a, b), (_, y)| (a.min(y), b.max(y)));
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += (y1 - y0) * 0.05;
    if y0 < 0.0 {
        y0 -= (y1 - y0) * 0.05;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.2},{TOP:.2}V{:.2}H{:.2}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"#,
            px(xv),
            TOP + plot_h + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.2}</text>"#,
            LEFT - 6.0,
            py(yv) + 4.0
        );
        let _ = writeln!(
            svg,
            r##"<path d="M{LEFT:.2},{y:.2}H{:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w,
            y = py(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<path d="M{lx:.2},{ly:.2}h20" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn series_by_strategy(rows: &[ReportRow], x: fn(&ReportRow) -> f64, y: fn(&ReportRow) -> f64) -> Vec<Series> {
    let mut groups: BTreeMap<Strategy, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.strategy).or_default().push((x(r), y(r)));
    }
    groups
        .into_iter()
        .map(|(s, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: s.to_string(), points }
        })
        .collect()
}

/// Writes the top-K charts (EM, prompt tokens, throughput vs K) when
/// `topk` is non-empty and the EM vs corpus-fraction chart when `scale`
/// is non-empty. Every series needs at least two points.
pub fn emit_charts(dir: &Path, topk: &[ReportRow], scale: &[ReportRow]) -> Result<Vec<PathBuf>> {
    if topk.is_empty() && scale.is_empty() {
        return Err(Error::invalid("no sweep results to chart"));
    }
    let mut charts = Vec::new();
    if !topk.is_empty() {
        let k = |r: &ReportRow| r.k as f64;
        charts.push(("em_vs_k.svg", line_chart_svg("Exact match vs K", "K", "EM (%)", &series_by_strategy(topk, k, |r| r.em_pct))?));
        charts.push((
            "prompt_tokens_vs_k.svg",
            line_chart_svg("Prompt tokens vs K", "K", "mean prompt tokens", &series_by_strategy(topk, k, |r| r.mean_prompt_tokens))?,
        ));
        let mut throughput = series_by_strategy(topk, k, |r| r.tokens_per_second);
        for s in &mut throughput {
            s.name.push_str(" total");
        }
        for mut s in series_by_strategy(topk, k, |r| r.generation_tokens_per_second) {
            s.name.push_str(" generated");
            throughput.push(s);
        }
        charts.push(("throughput_vs_k.svg", line_chart_svg("Throughput vs K", "K", "tokens / second", &throughput)?));
    }
    if !scale.is_empty() {
        charts.push((
            "em_vs_fraction.svg",
            line_chart_svg(
                "Exact match vs corpus fraction",
                "corpus fraction",
                "EM (%)",
                &series_by_strategy(scale, |r| r.corpus_fraction, |r| r.em_pct),
            )?,
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    charts
        .into_iter()
        .map(|(name, svg)| {
            let path = dir.join(name);
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
