//! CSV, Markdown and JSON emitters.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use serde_json::Value;

use crate::chart::render_chart;
use crate::config::OutputFormat;
use crate::error::{CliError, Result};
use crate::record::{value_text, ResultRecord, ResultSet};

pub fn to_json(set: &ResultSet) -> Result<String> {
    let mut s = serde_json::to_string_pretty(set)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<ResultSet> {
    Ok(serde_json::from_str(text)?)
}

/// Long format: `method, metric, value, table`, then every parameter key in
/// first-seen order.
pub fn to_csv(records: &[ResultRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let keys: IndexSet<&str> = records.iter().flat_map(|r| r.params.keys().map(String::as_str)).collect();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let mut header = vec!["method", "metric", "value", "table"];
    header.extend(keys.iter());
    w.write_record(&header)?;
    for r in records {
        for (metric, v) in &r.metrics {
            let mut row = vec![r.method.clone(), metric.clone(), fmt_value(*v), r.table.clone()];
            row.extend(keys.iter().map(|k| r.params.get(*k).map(value_text).unwrap_or_default()));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy)]
enum Fmt {
    Pct(usize),
    Fixed(usize),
    Times(usize),
    Millions,
    Int,
    Sci,
}

fn fmt_cell(v: Option<f64>, f: Fmt) -> String {
    let Some(v) = v else { return "-".into() };
    if !v.is_finite() {
        return fmt_value(v);
    }
    match f {
        Fmt::Pct(d) => format!("{:.*}%", d, v * 100.0),
        Fmt::Fixed(d) => format!("{v:.d$}"),
        Fmt::Times(d) => format!("{v:.d$}×"),
        Fmt::Millions => format!("{:.1}M", v / 1e6),
        Fmt::Int => format!("{}", v.round() as i64),
        Fmt::Sci => format!("{v:.3e}"),
    }
}

#[derive(Debug, Clone, Copy)]
enum Col {
    Param(&'static str, &'static str),
    /// `(header, method, metric, fmt)`; in method-row tables `method` is
    /// ignored.
    Metric(&'static str, &'static str, &'static str, Fmt),
    /// `num / den` of one metric across two methods.
    Ratio(&'static str, &'static str, &'static str, &'static str, Fmt),
    /// Reference method's metric over this row's metric.
    RatioTo(&'static str, &'static str, &'static str, Fmt),
}

enum Layout {
    /// One row per method.
    MethodRows(&'static [Col]),
    /// One row per value of a parameter; methods spread over columns.
    ParamRows(&'static str, &'static [Col]),
}

const EXCEED: [Col; 5] = [
    Col::Metric("L2 Rel. Error", "", "l2_rel", Fmt::Pct(4)),
    Col::Metric(">0.1%", "", "gt_0_1pct", Fmt::Pct(1)),
    Col::Metric(">0.5%", "", "gt_0_5pct", Fmt::Pct(1)),
    Col::Metric(">1%", "", "gt_1pct", Fmt::Pct(1)),
    Col::Metric(">5%", "", "gt_5pct", Fmt::Pct(1)),
];

fn layout(table: &str) -> Option<(&'static str, Layout)> {
    use Col::*;
    Some(match table {
        "table1" => (
            "MXFP4 decomposition design evolution",
            Layout::MethodRows(&[
                Param("α Bound", "alpha_bound"),
                Param("β", "beta"),
                Metric("Clip%", "", "clip_rate", Fmt::Pct(1)),
                Metric("Eff. Bits", "", "eff_bits", Fmt::Fixed(2)),
                Metric("L2 Error", "", "l2_rel", Fmt::Fixed(4)),
                RatioTo("vs. MXFP8", "mxfp8", "l2_rel", Fmt::Times(2)),
            ]),
        ),
        "table4" => (
            "Vector ops (millions)",
            Layout::ParamRows(
                "n",
                &[
                    Param("N", "n"),
                    Metric("Dequant", "dequant", "vector_ops", Fmt::Millions),
                    Metric("MSD", "msd", "vector_ops", Fmt::Millions),
                    Ratio("Ratio", "dequant", "msd", "vector_ops", Fmt::Times(1)),
                ],
            ),
        ),
        "crossover_d" => (
            "Dequant/MSD Vector ratio by head dimension",
            Layout::ParamRows(
                "n",
                &[
                    Param("N", "n"),
                    Metric("d = 128", "d128", "ratio", Fmt::Times(1)),
                    Metric("d = 576", "d576", "ratio", Fmt::Times(1)),
                ],
            ),
        ),
        "crossover" => (
            "Crossover query count",
            Layout::ParamRows(
                "d",
                &[
                    Param("d", "d"),
                    Metric("N* approx", "crossover", "approx", Fmt::Fixed(1)),
                    Metric("N* exact", "crossover", "exact", Fmt::Fixed(1)),
                ],
            ),
        ),
        "hbm_attention" => (
            "KV-cache HBM traffic per head",
            Layout::MethodRows(&[
                Metric("Bytes", "", "bytes", Fmt::Int),
                Metric("Dequant/method", "", "ratio_vs_dequant", Fmt::Times(2)),
            ]),
        ),
        "hbm_linear" => (
            "Linear-layer HBM traffic",
            Layout::MethodRows(&[
                Metric("Bytes", "", "bytes", Fmt::Int),
                Metric("Weight bytes/elem", "", "weight_coeff", Fmt::Int),
                Metric("Dequant/method", "", "ratio_vs_dequant", Fmt::Times(2)),
                Metric("Dominant-term ratio", "", "dominant_ratio_vs_dequant", Fmt::Times(2)),
            ]),
        ),
        "latency" => (
            "Linear-layer latency model (seconds)",
            Layout::MethodRows(&[
                Metric("T_vector", "", "t_vector", Fmt::Sci),
                Metric("T_cube", "", "t_cube", Fmt::Sci),
                Metric("T_total", "", "t_total", Fmt::Sci),
            ]),
        ),
        "table5" => ("Error distribution", Layout::MethodRows(&EXCEED)),
        "table6" => ("Ablation: decomposition depth", Layout::MethodRows(&EXCEED)),
        "table8" => ("Flash attention error distribution", Layout::MethodRows(&EXCEED)),
        "table7" => (
            "L2 relative error vs. matrix size",
            Layout::ParamRows(
                "size",
                &[
                    Param("Size", "size"),
                    Metric("Dequant", "dequant", "l2_rel", Fmt::Pct(3)),
                    Metric("MSD (K=2)", "msd", "l2_rel", Fmt::Pct(4)),
                    Ratio("Improvement", "dequant", "msd", "l2_rel", Fmt::Times(0)),
                ],
            ),
        ),
        "fig2" => (
            "L2 relative error vs. activation distribution",
            Layout::ParamRows(
                "distribution",
                &[
                    Param("Distribution", "distribution"),
                    Metric("Dequant L2", "dequant", "l2_rel", Fmt::Pct(3)),
                    Metric("MSD L2", "msd", "l2_rel", Fmt::Pct(4)),
                    Metric("Dequant >1%", "dequant", "gt_1pct", Fmt::Pct(1)),
                    Metric("MSD >1%", "msd", "gt_1pct", Fmt::Pct(1)),
                    Ratio("Improvement", "dequant", "msd", "l2_rel", Fmt::Times(0)),
                ],
            ),
        ),
        "fig3a" => (
            "Flash attention L2 error vs. sequence length",
            Layout::ParamRows(
                "seq_len",
                &[
                    Param("Seq", "seq_len"),
                    Metric("Dequant", "dequant", "l2_rel", Fmt::Pct(3)),
                    Metric("Flash", "flash_dequant", "l2_rel", Fmt::Pct(3)),
                    Metric("Flash+MSD", "flash_msd", "l2_rel", Fmt::Pct(4)),
                    Metric("Flash+MSD (BF16 Q)", "flash_msd_bf16q", "l2_rel", Fmt::Pct(3)),
                ],
            ),
        ),
        "fig3b" => (
            "Flash attention L2 error vs. block size",
            Layout::ParamRows(
                "block_size",
                &[
                    Param("Bc", "block_size"),
                    Metric("Flash", "flash_dequant", "l2_rel", Fmt::Pct(3)),
                    Metric("Flash+MSD", "flash_msd", "l2_rel", Fmt::Pct(4)),
                    Metric("Flash+MSD (BF16 Q)", "flash_msd_bf16q", "l2_rel", Fmt::Pct(3)),
                ],
            ),
        ),
        "table9" => (
            "Activation decomposition accuracy: MSD-MXFP4 vs. MXFP8",
            Layout::ParamRows(
                "distribution",
                &[
                    Param("Distribution", "distribution"),
                    Metric("MSD-opt L2", "msd_mxfp4_v3", "l2_rel", Fmt::Fixed(4)),
                    Metric("MSD-opt Eff. Bits", "msd_mxfp4_v3", "eff_bits", Fmt::Fixed(2)),
                    Metric("MXFP8 L2", "mxfp8", "l2_rel", Fmt::Fixed(4)),
                    Metric("MXFP8 Eff. Bits", "mxfp8", "eff_bits", Fmt::Fixed(2)),
                    Ratio("MSD / MXFP8", "mxfp8", "msd_mxfp4_v3", "l2_rel", Fmt::Times(2)),
                ],
            ),
        ),
        "table10" | "table11" => {
            const COLS: [Col; 6] = [
                Param("", ""),
                Metric("MSD-opt L2", "msd_mxfp4_v3", "l2_rel", Fmt::Fixed(4)),
                Metric(">5%", "msd_mxfp4_v3", "gt_5pct", Fmt::Pct(1)),
                Metric("MXFP8 L2", "mxfp8", "l2_rel", Fmt::Fixed(4)),
                Metric(">5%", "mxfp8", "gt_5pct", Fmt::Pct(1)),
                Ratio("MSD/MXFP8", "mxfp8", "msd_mxfp4_v3", "l2_rel", Fmt::Times(2)),
            ];
            if table == "table10" {
                const C: [Col; 6] = {
                    let mut c = COLS;
                    c[0] = Param("Distribution", "distribution");
                    c
                };
                ("MXFP4 GEMM accuracy vs. distribution", Layout::ParamRows("distribution", &C))
            } else {
                const C: [Col; 6] = {
                    let mut c = COLS;
                    c[0] = Param("Size", "size");
                    c
                };
                ("MXFP4 GEMM accuracy vs. matrix size", Layout::ParamRows("size", &C))
            }
        }
        "table12" => (
            "Error bound verification: max error / (α/64)",
            Layout::ParamRows(
                "distribution",
                &[
                    Param("Distribution", "distribution"),
                    Metric("max err/(α/64)", "msd_mxfp4_v3", "max_ratio", Fmt::Fixed(4)),
                    Metric("Pass 2 clip rate", "msd_mxfp4_v3", "clip_rate", Fmt::Pct(2)),
                    Metric("Eff. Bits", "msd_mxfp4_v3", "eff_bits", Fmt::Fixed(2)),
                    Metric("Violations", "msd_mxfp4_v3", "violations", Fmt::Int),
                    Metric("Blocks", "msd_mxfp4_v3", "blocks", Fmt::Int),
                ],
            ),
        ),
        "theorem1" => (
            "INT8 reconstruction bound: max error / bound",
            Layout::ParamRows(
                "distribution",
                &[
                    Param("Distribution", "distribution"),
                    Metric("Standard", "msd", "max_ratio", Fmt::Fixed(6)),
                    Metric("Violations", "msd", "violations", Fmt::Int),
                    Metric("Fractional", "msd_fractional", "max_ratio", Fmt::Fixed(6)),
                    Metric("Violations", "msd_fractional", "violations", Fmt::Int),
                    Metric("Vectors", "msd", "vectors", Fmt::Int),
                ],
            ),
        ),
        _ => return None,
    })
}

fn row_line(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn metric_of(rows: &[&ResultRecord], method: &str, metric: &str) -> Option<f64> {
    rows.iter().find(|r| r.method == method).and_then(|r| r.metric(metric))
}

fn render_method_rows(rows: &[&ResultRecord], all: &[&ResultRecord], cols: &[Col]) -> String {
    let mut header = vec!["Method".to_string()];
    header.extend(cols.iter().map(|c| match c {
        Col::Param(h, _) | Col::Metric(h, ..) | Col::Ratio(h, ..) | Col::RatioTo(h, ..) => h.to_string(),
    }));
    let mut out = row_line(&header);
    out.push_str(&row_line(&vec!["---".to_string(); header.len()]));
    for r in rows {
        let mut cells = vec![r.method.clone()];
        for c in cols {
            cells.push(match *c {
                Col::Param(_, k) => r.param(k).unwrap_or_else(|| "-".into()),
                Col::Metric(_, _, m, f) => fmt_cell(r.metric(m), f),
                Col::Ratio(_, num, den, m, f) => fmt_cell(
                    metric_of(all, num, m).zip(metric_of(all, den, m)).map(|(a, b)| a / b),
                    f,
                ),
                Col::RatioTo(_, refm, m, f) => {
                    fmt_cell(metric_of(all, refm, m).zip(r.metric(m)).map(|(a, b)| a / b), f)
                }
            });
        }
        out.push_str(&row_line(&cells));
    }
    out
}

fn render_param_rows(rows: &[&ResultRecord], key: &str, cols: &[Col]) -> String {
    let header: Vec<String> = cols
        .iter()
        .map(|c| match c {
            Col::Param(h, _) | Col::Metric(h, ..) | Col::Ratio(h, ..) | Col::RatioTo(h, ..) => h.to_string(),
        })
        .collect();
    let mut out = row_line(&header);
    out.push_str(&row_line(&vec!["---".to_string(); header.len()]));
    let values: IndexSet<Value> = rows.iter().filter_map(|r| r.params.get(key).cloned()).collect();
    for v in values {
        let group: Vec<&ResultRecord> = rows.iter().copied().filter(|r| r.params.get(key) == Some(&v)).collect();
        let cells: Vec<String> = cols
            .iter()
            .map(|c| match *c {
                Col::Param(_, k) => group.first().and_then(|r| r.param(k)).unwrap_or_else(|| "-".into()),
                Col::Metric(_, method, m, f) => fmt_cell(metric_of(&group, method, m), f),
                Col::Ratio(_, num, den, m, f) => {
                    fmt_cell(metric_of(&group, num, m).zip(metric_of(&group, den, m)).map(|(a, b)| a / b), f)
                }
                Col::RatioTo(..) => "-".into(),
            })
            .collect();
        out.push_str(&row_line(&cells));
    }
    out
}

fn render_generic(rows: &[&ResultRecord]) -> String {
    let metrics: IndexSet<&str> = rows.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
    let mut header = vec!["Method".to_string()];
    header.extend(metrics.iter().map(|m| m.to_string()));
    let mut out = row_line(&header);
    out.push_str(&row_line(&vec!["---".to_string(); header.len()]));
    for r in rows {
        let mut cells = vec![r.method.clone()];
        cells.extend(metrics.iter().map(|m| fmt_cell(r.metric(m), Fmt::Sci)));
        out.push_str(&row_line(&cells));
    }
    out
}

/// One section per table id, in order of first appearance.
pub fn to_markdown(records: &[ResultRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let tables: IndexSet<&str> = records.iter().map(|r| r.table.as_str()).collect();
    let mut out = String::new();
    for t in tables {
        let rows: Vec<&ResultRecord> = records.iter().filter(|r| r.table == t).collect();
        match layout(t) {
            Some((title, Layout::MethodRows(cols))) => {
                let _ = write!(out, "## {t}: {title}\n\n");
                // method-row tables repeat per parameter point (e.g. one
                // table8 row set per sequence length)
                let points: IndexSet<String> =
                    rows.iter().map(|r| serde_json::to_string(&r.params).unwrap_or_default()).collect();
                for pt in points {
                    let group: Vec<&ResultRecord> = rows
                        .iter()
                        .copied()
                        .filter(|r| serde_json::to_string(&r.params).unwrap_or_default() == pt)
                        .collect();
                    let shared = shared_params(&group);
                    if !shared.is_empty() {
                        let _ = write!(out, "{shared}\n\n");
                    }
                    out.push_str(&render_method_rows(&group, &group, cols));
                    out.push('\n');
                }
            }
            Some((title, Layout::ParamRows(key, cols))) => {
                let _ = write!(out, "## {t}: {title}\n\n");
                out.push_str(&render_param_rows(&rows, key, cols));
                out.push('\n');
            }
            None => {
                let _ = write!(out, "## {t}\n\n");
                out.push_str(&render_generic(&rows));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Parameters with one value across all rows, as `key=value` text.
fn shared_params(rows: &[&ResultRecord]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    first
        .params
        .iter()
        .filter(|(k, v)| rows.iter().all(|r| r.params.get(*k) == Some(v)))
        .map(|(k, v)| format!("{k}={}", value_text(v)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn emit_table(records: &[ResultRecord], format: OutputFormat, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let text = match format {
        OutputFormat::Csv => to_csv(records)?,
        OutputFormat::Markdown => to_markdown(records)?,
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(records)?;
            s.push('\n');
            s
        }
    };
    write_file(path, &text)
}

/// Writes every configured format and chart as `<dir>/<stem>.<ext>`.
pub fn write_outputs(set: &ResultSet, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    if set.records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let mut written = Vec::new();
    for &f in &set.config.output.formats {
        let (ext, text) = match f {
            OutputFormat::Json => ("json", to_json(set)?),
            OutputFormat::Csv => ("csv", to_csv(&set.records)?),
            OutputFormat::Markdown => ("md", to_markdown(&set.records)?),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        write_file(&path, &text)?;
        written.push(path);
    }
    for spec in &set.config.output.charts {
        let path = dir.join(format!("{}.svg", spec.file));
        write_file(&path, &render_chart(&set.records, spec)?)?;
        written.push(path);
    }
    Ok(written)
}
