//! Speedup tables, parameter plots and a combined summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::experiment::{read_trace, BenchReport, TraceTable};
use crate::format::{float, to_json};
use crate::speedup::speedup_from_times;
use crate::BenchError;

pub const TABLE_COLUMNS: [&str; 6] = ["integrator", "sequential_s", "parallel_s", "batched_s", "S_P", "E_P"];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TableRow {
    pub integrator: String,
    pub sequential_s: Option<f64>,
    pub parallel_s: Option<f64>,
    pub batched_s: Option<f64>,
    #[serde(rename = "S_P")]
    pub s_p: Option<f64>,
    #[serde(rename = "E_P")]
    pub e_p: Option<f64>,
}

impl TableRow {
    fn cells(&self, float_cell: impl Fn(f64) -> String, missing: &str) -> Vec<String> {
        let cell = |v: Option<f64>| v.map_or_else(|| missing.to_string(), &float_cell);
        vec![
            self.integrator.clone(),
            cell(self.sequential_s),
            cell(self.parallel_s),
            cell(self.batched_s),
            cell(self.s_p),
            cell(self.e_p),
        ]
    }
}

/// One row per integrator, in order of first appearance. When a backend
/// was run more than once the last report wins.
pub fn speedup_table(reports: &[BenchReport]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::new();
    let mut workers: Vec<usize> = Vec::new();
    for r in reports {
        let k = match rows.iter().position(|row| row.integrator == r.integrator) {
            Some(k) => k,
            None => {
                rows.push(TableRow { integrator: r.integrator.clone(), ..TableRow::default() });
                workers.push(0);
                rows.len() - 1
            }
        };
        match r.backend.as_str() {
            "seq" => rows[k].sequential_s = Some(r.wall_time_s),
            "par" => {
                rows[k].parallel_s = Some(r.wall_time_s);
                workers[k] = r.workers;
            }
            _ => rows[k].batched_s = Some(r.wall_time_s),
        }
    }
    for (row, p) in rows.iter_mut().zip(workers) {
        if let (Some(t1), Some(tp)) = (row.sequential_s, row.parallel_s) {
            let s = speedup_from_times(t1, tp, Some(p));
            row.s_p = Some(s.s);
            row.e_p = s.e;
        }
    }
    rows
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = TABLE_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.cells(float, "").join(","));
        out.push('\n');
    }
    out
}

/// Right-aligned columns for reading in a terminal.
pub fn table_text(rows: &[TableRow]) -> String {
    let mut cells = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    cells.extend(rows.iter().map(|r| r.cells(|v| format!("{v:.3}"), "-")));
    let widths: Vec<usize> =
        (0..TABLE_COLUMNS.len()).map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;

/// Posterior mean with a band of two standard deviations against
/// observation time, with the data-generating value as a dashed line.
pub fn parameter_svg(trace: &TraceTable, k: usize, truth: Option<f64>) -> String {
    let name = &trace.param_names[k];
    let mean: Vec<f64> = trace.mean.iter().map(|r| r[k]).collect();
    let sd: Vec<f64> = trace.var.iter().map(|r| r[k].max(0.0).sqrt()).collect();
    let lo: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m - 2.0 * s).collect();
    let hi: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect();

    let finite = |v: &f64| v.is_finite();
    let (t_min, t_max) = bounds(trace.t.iter().copied().filter(finite));
    let (mut y_min, mut y_max) = bounds(lo.iter().chain(&hi).chain(truth.as_ref()).copied().filter(finite));
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let t_span = if t_max > t_min { t_max - t_min } else { 1.0 };
    let sx = |t: f64| MARGIN + (t - t_min) / t_span * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);
    let points = |ys: &[f64]| -> String {
        trace.t.iter().zip(ys).map(|(t, y)| format!("{:.2},{:.2}", sx(*t), sy(*y))).collect::<Vec<_>>().join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let band: String = {
        let upper = points(&hi);
        let lower: Vec<String> =
            trace.t.iter().zip(&lo).rev().map(|(t, y)| format!("{:.2},{:.2}", sx(*t), sy(*y))).collect();
        format!("{upper} {}", lower.join(" "))
    };
    let _ = writeln!(svg, r##"<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##);
    let _ =
        writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##, points(&mean));
    if let Some(v) = truth {
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#cb181d" stroke-dasharray="6,4"/>"##,
            WIDTH - MARGIN
        );
    }
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}" text-anchor="middle">{t_min:.3}</text>"#, y0 + 16.0);
    let _ = writeln!(svg, r#"<text x="{x1}" y="{}" text-anchor="middle">{t_max:.3}</text>"#, y0 + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, (x0 + x1) / 2.0, y0 + 32.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{y_min:.4}</text>"#, x0 - 4.0, y0);
    let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{y_max:.4}</text>"#, x0 - 4.0, y1 + 4.0);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{name}</text>"#, WIDTH / 2.0);
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub table_csv: PathBuf,
    pub table_txt: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    table: &'a [TableRow],
    reports: &'a [BenchReport],
}

/// Writes `speedup.csv`, `speedup.txt`, `summary.json` and one SVG per
/// parameter and report under `plots/<integrator>-<backend>/`.
pub fn emit_report(reports: &[BenchReport], out: &Path) -> Result<ReportFiles, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::Config("no reports to summarise".into()));
    }
    fs::create_dir_all(out).map_err(BenchError::io(out))?;
    let rows = speedup_table(reports);
    let write = |path: PathBuf, text: String| -> Result<PathBuf, BenchError> {
        fs::write(&path, text).map_err(BenchError::io(&path))?;
        Ok(path)
    };
    let table_csv_path = write(out.join("speedup.csv"), table_csv(&rows))?;
    let table_txt_path = write(out.join("speedup.txt"), table_text(&rows))?;

    let mut plots = Vec::new();
    for r in reports {
        let trace = read_trace(&r.trace)?;
        let dir = out.join("plots").join(format!("{}-{}", r.integrator, r.backend));
        fs::create_dir_all(&dir).map_err(BenchError::io(&dir))?;
        for (k, name) in trace.param_names.iter().enumerate() {
            plots.push(write(dir.join(format!("{name}.svg")), parameter_svg(&trace, k, r.truth.get(k).copied()))?);
        }
    }
    let summary = to_json(&Summary { table: &rows, reports }).map_err(|e| BenchError::format(out, e))?;
    let summary_path = write(out.join("summary.json"), summary)?;
    Ok(ReportFiles { table_csv: table_csv_path, table_txt: table_txt_path, summary: summary_path, plots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> TraceTable {
        TraceTable {
            param_names: vec!["a".into(), "b".into()],
            j: vec![0, 1, 2],
            t: vec![0.0, 1.0, 2.0],
            mean: vec![vec![1.0, 2.0], vec![1.5, 2.0], vec![1.2, 2.0]],
            var: vec![vec![0.04, 0.0], vec![0.01, 0.0], vec![0.01, 0.0]],
            ess: vec![10.0, 8.0, 9.0],
        }
    }

    #[test]
    fn svg_is_deterministic_and_self_contained() {
        let a = parameter_svg(&trace(), 0, Some(1.3));
        assert_eq!(a, parameter_svg(&trace(), 0, Some(1.3)));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("stroke-dasharray"));
        // a flat series still gets a usable axis
        let b = parameter_svg(&trace(), 1, None);
        assert!(!b.contains("NaN") && !b.contains("inf"));
    }

    #[test]
    fn text_table_aligns() {
        let rows = vec![TableRow {
            integrator: "bdf2".into(),
            sequential_s: Some(2.0),
            parallel_s: Some(1.0),
            s_p: Some(2.0),
            e_p: Some(0.5),
            ..TableRow::default()
        }];
        let text = table_text(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("integrator"));
        assert!(lines[1].contains('-'));
        let csv = table_csv(&rows);
        assert_eq!(csv.lines().next().unwrap(), "integrator,sequential_s,parallel_s,batched_s,S_P,E_P");
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }
}
