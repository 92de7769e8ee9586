//! Plain-text tables and on-disk report output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::report::{EvaluationReport, GenerationReport, OVERALL};

fn aligned(header: &[String], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
    out.push('\n');
    for row in body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn cell(v: Option<f64>, places: usize) -> String {
    v.map(|v| format!("{v:.places$}")).unwrap_or_else(|| "-".to_string())
}

pub fn render_generation(report: &GenerationReport) -> String {
    let mut out = String::new();
    for table in &report.tables {
        let mut header = vec![format!("{} method", table.task)];
        header.extend(table.categories.iter().cloned());
        header.push(OVERALL.to_string());
        let body: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.method.clone()];
                cells.extend(r.cells.iter().map(|v| cell(*v, 2)));
                cells.push(cell(r.overall, 2));
                cells
            })
            .collect();
        out.push_str(&aligned(&header, &body));
        if !table.empty_cells.is_empty() {
            let list: Vec<String> = table.empty_cells.iter().map(|e| format!("{}/{}", e.method, e.category)).collect();
            let _ = writeln!(out, "empty cells: {}", list.join(", "));
        }
        out.push('\n');
    }
    out
}

pub fn render_evaluation(report: &EvaluationReport) -> String {
    let mut header = vec!["method".to_string()];
    for scope in &report.scopes {
        for m in ["SRCC", "KRCC", "PLCC"] {
            header.push(format!("{scope} {m}"));
        }
    }
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.method.clone()];
            for c in &r.cells {
                let co = c.coefficients;
                cells.push(cell(co.map(|x| x.srcc), 4));
                cells.push(cell(co.map(|x| x.krcc), 4));
                cells.push(cell(co.map(|x| x.plcc), 4));
            }
            cells
        })
        .collect();
    let mut out = aligned(&header, &body);
    if !report.skipped.is_empty() {
        let _ = writeln!(out, "skipped users: {}", report.skipped.len());
    }
    out
}

/// Everything produced by one report run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub generation: GenerationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
}

/// Writes `generation.{json,txt}` and, when present, `evaluation.{json,txt}`
/// into `dir`, returning the written paths.
pub fn write_report_dir(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("generation.json", pretty_json(&report.generation))?;
    put("generation.txt", render_generation(&report.generation))?;
    if let Some(eval) = &report.evaluation {
        put("evaluation.json", pretty_json(eval))?;
        put("evaluation.txt", render_evaluation(eval))?;
    }
    Ok(written)
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
