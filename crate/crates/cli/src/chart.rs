//! Minimal deterministic SVG charts.

use std::fmt::Write;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::record::ResultRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    #[default]
    Line,
    Bar,
}

/// What to plot. Series are methods; x categories come from the `x`
/// parameter, or from `metrics` when that list is non-empty (one category
/// per metric, value on y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub table: String,
    #[serde(default)]
    pub x: String,
    #[serde(default)]
    pub y: String,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub kind: ChartKind,
    #[serde(default)]
    pub log_y: bool,
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default)]
    pub title: String,
    /// Output file stem, without extension.
    pub file: String,
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Data {
    categories: Vec<String>,
    series: IndexMap<String, Vec<Option<f64>>>,
}

fn collect(records: &[ResultRecord], spec: &ChartSpec) -> Result<Data> {
    let rows: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.table == spec.table && (spec.methods.is_empty() || spec.methods.contains(&r.method)))
        .collect();
    let mut categories: Vec<String> = Vec::new();
    let mut points: Vec<(String, String, f64)> = Vec::new();
    for r in &rows {
        if spec.metrics.is_empty() {
            let (Some(x), Some(y)) = (r.param(&spec.x), r.metric(&spec.y)) else { continue };
            points.push((r.method.clone(), x, y));
        } else {
            for m in &spec.metrics {
                if let Some(y) = r.metric(m) {
                    points.push((r.method.clone(), m.clone(), y));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::MissingSeries(format!(
            "no data for table {:?}, x {:?}, y {:?}",
            spec.table, spec.x, spec.y
        )));
    }
    for (_, x, _) in &points {
        if !categories.contains(x) {
            categories.push(x.clone());
        }
    }
    if categories.iter().all(|c| c.parse::<f64>().is_ok()) {
        categories.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let mut series: IndexMap<String, Vec<Option<f64>>> = IndexMap::new();
    for (m, x, y) in points {
        let idx = categories.iter().position(|c| *c == x).unwrap();
        let s = series.entry(m).or_insert_with(|| vec![None; categories.len()]);
        s[idx] = Some(y);
    }
    Ok(Data { categories, series })
}

struct YAxis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl YAxis {
    fn new(values: &[f64], log: bool) -> Result<Self> {
        if log {
            let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
            if pos.is_empty() {
                return Err(CliError::MissingSeries("log axis needs positive values".into()));
            }
            let lo = pos.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
            let mut hi = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
            if hi <= lo {
                hi = lo + 1.0;
            }
            Ok(Self { lo, hi, log })
        } else {
            let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
            let max = finite.iter().copied().fold(0f64, f64::max);
            let min = finite.iter().copied().fold(0f64, f64::min);
            let hi = if max > 0.0 { nice_ceil(max * 1.05) } else { 1.0 };
            let lo = if min < 0.0 { -nice_ceil(-min * 1.05) } else { 0.0 };
            Ok(Self { lo, hi, log })
        }
    }

    fn pos(&self, v: f64) -> f64 {
        let t = if self.log { (v.max(1e-300).log10() - self.lo) / (self.hi - self.lo) } else { (v - self.lo) / (self.hi - self.lo) };
        let t = t.clamp(0.0, 1.0);
        TOP + (H - TOP - BOTTOM) * (1.0 - t)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, trim_num(v))
                })
                .collect()
        }
    }
}

fn nice_ceil(v: f64) -> f64 {
    let p = 10f64.powf(v.log10().floor());
    let m = v / p;
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].into_iter().find(|&s| m <= s).unwrap_or(10.0);
    step * p
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a standalone SVG 1.1 document.
pub fn render_chart(records: &[ResultRecord], spec: &ChartSpec) -> Result<String> {
    let data = collect(records, spec)?;
    let values: Vec<f64> = data.series.values().flatten().flatten().copied().collect();
    let y = YAxis::new(&values, spec.log_y)?;
    let ncat = data.categories.len();
    let plot_w = W - LEFT - RIGHT;
    let slot = plot_w / ncat as f64;
    let cx = |i: usize| LEFT + slot * (i as f64 + 0.5);
    let base = H - BOTTOM;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let title = if spec.title.is_empty() { &spec.table } else { &spec.title };
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, esc(title));

    for (v, label) in y.ticks() {
        let py = y.pos(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, esc(&label));
    }
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{:.2}" y2="{base}" stroke="black"/>"#, LEFT + plot_w);
    for (i, c) in data.categories.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{}</text>"#, cx(i), base + 18.0, esc(c));
    }
    let xlabel = if spec.metrics.is_empty() { spec.x.as_str() } else { "metric" };
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, H - 16.0, esc(xlabel));
    let ylabel = if spec.y.is_empty() { "value" } else { spec.y.as_str() };
    let ymid = TOP + (base - TOP) / 2.0;
    let _ = writeln!(
        s,
        r#"<text x="20" y="{ymid:.1}" text-anchor="middle" transform="rotate(-90 20 {ymid:.1})">{}{}</text>"#,
        esc(ylabel),
        if spec.log_y { " (log)" } else { "" }
    );

    let nser = data.series.len();
    for (k, (name, vals)) in data.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        match spec.kind {
            ChartKind::Line => {
                let pts: Vec<String> = vals
                    .iter()
                    .enumerate()
                    .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", cx(i), y.pos(v))))
                    .collect();
                if pts.len() > 1 {
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
                }
                for (i, v) in vals.iter().enumerate() {
                    if let Some(v) = v {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, cx(i), y.pos(*v));
                    }
                }
            }
            ChartKind::Bar => {
                let bw = slot * 0.8 / nser as f64;
                for (i, v) in vals.iter().enumerate() {
                    if let Some(v) = v {
                        let x0 = cx(i) - slot * 0.4 + bw * k as f64;
                        let top = y.pos(*v);
                        let bottom = if y.log { base } else { y.pos(0.0) };
                        let (y0, h) = if top <= bottom { (top, bottom - top) } else { (bottom, top - bottom) };
                        let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{bw:.2}" height="{h:.2}" fill="{color}"/>"#);
                    }
                }
            }
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 16.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}">{}</text>"#, lx + 18.0, esc(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params;
    use crate::record::{Metrics, ARTIFACT_VERSION};

    fn rec(method: &str, seq: u64, l2: f64) -> ResultRecord {
        let mut metrics = Metrics::new();
        metrics.insert("l2_rel".into(), l2);
        ResultRecord {
            experiment: "flash_attention".into(),
            table: "fig3a".into(),
            method: method.into(),
            params: params! {"seq_len" => seq},
            metrics,
            seed: 1,
            trials: 1,
            version: ARTIFACT_VERSION.into(),
            errors: vec![],
            wall_time_s: None,
        }
    }

    fn spec() -> ChartSpec {
        ChartSpec {
            table: "fig3a".into(),
            x: "seq_len".into(),
            y: "l2_rel".into(),
            metrics: vec![],
            kind: ChartKind::Line,
            log_y: true,
            methods: vec![],
            title: String::new(),
            file: "f".into(),
        }
    }

    #[test]
    fn single_point() {
        let svg = render_chart(&[rec("a", 64, 0.01)], &spec()).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn three_series_sorted_numeric_x() {
        let mut recs = Vec::new();
        for (m, base) in [("dequant", 0.014), ("flash_dequant", 0.0138), ("flash_msd", 0.005)] {
            for seq in [16384u64, 64, 1024] {
                recs.push(rec(m, seq, base));
            }
        }
        let svg = render_chart(&recs, &spec()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        let p64 = svg.find(">64<").unwrap();
        let p16k = svg.find(">16384<").unwrap();
        assert!(p64 < p16k);
        assert_eq!(svg, render_chart(&recs, &spec()).unwrap());
    }

    #[test]
    fn missing_series_is_an_error() {
        let mut s = spec();
        s.y = "nope".into();
        assert!(matches!(render_chart(&[rec("a", 64, 0.01)], &s), Err(CliError::MissingSeries(_))));
    }

    #[test]
    fn bar_chart_over_metrics() {
        let mut s = spec();
        s.kind = ChartKind::Bar;
        s.log_y = false;
        s.metrics = vec!["l2_rel".into()];
        let svg = render_chart(&[rec("a", 64, 0.5), rec("b", 64, 0.25)], &s).unwrap();
        assert_eq!(svg.matches(r#"<rect x="#).count(), 4);
    }
}
