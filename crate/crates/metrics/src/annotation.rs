//! Benchmark inputs: annotation rows, model predictions and their CSV forms.

use std::io::Read;
use std::path::Path;

use prefloop_core::{Score, TaskKind};
use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

const CREATION_CATEGORIES: [&str; 10] = [
    "Single", "Two", "Multiple", "Color", "Light", "Scene", "Style", "OCR", "Action", "Expression",
];
const EDITING_CATEGORIES: [&str; 10] = [
    "Addition", "Removal", "Replacement", "Color", "Light", "Background", "Style", "OCR", "Action", "Expression",
];

pub const ANNOTATION_HEADER: [&str; 6] = ["user_id", "method", "task", "category", "sample_id", "score"];

/// The ten benchmark categories of a task, in report column order.
pub fn categories(task: TaskKind) -> &'static [&'static str; 10] {
    match task {
        TaskKind::T2I | TaskKind::T2V | TaskKind::I2V => &CREATION_CATEGORIES,
        TaskKind::I2I | TaskKind::V2V => &EDITING_CATEGORIES,
    }
}

/// Case-insensitive lookup returning the canonical spelling.
pub fn canonical_category(task: TaskKind, category: &str) -> Result<&'static str> {
    let wanted = category.trim();
    categories(task)
        .iter()
        .find(|c| c.eq_ignore_ascii_case(wanted))
        .copied()
        .ok_or_else(|| MetricsError::UnknownCategory {
            task: task.to_string(),
            category: wanted.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub user_id: String,
    pub method_name: String,
    pub task: TaskKind,
    pub category: String,
    pub sample_id: String,
    pub user_score: Score,
}

impl AnnotationRow {
    /// Builds a row, canonicalizing the category against the task's list.
    pub fn new(user_id: &str, method_name: &str, task: TaskKind, category: &str, sample_id: &str, score: f64) -> Result<Self> {
        let reason = |r: &str| MetricsError::InvalidRow { line: 0, reason: r.to_string() };
        if user_id.trim().is_empty() {
            return Err(reason("user_id is empty"));
        }
        if method_name.trim().is_empty() {
            return Err(reason("method is empty"));
        }
        if sample_id.trim().is_empty() {
            return Err(reason("sample_id is empty"));
        }
        let user_score = Score::new(score).map_err(|e| reason(&e.to_string()))?;
        Ok(AnnotationRow {
            user_id: user_id.trim().to_string(),
            method_name: method_name.trim().to_string(),
            task,
            category: canonical_category(task, category)?.to_string(),
            sample_id: sample_id.trim().to_string(),
            user_score,
        })
    }
}

/// A score predicted by an evaluation method for one sample. Predictions
/// are on the method's own scale; only their ordering and linearity matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub method: String,
    pub sample_id: String,
    pub score: f64,
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(input)
}

fn csv_error(e: csv::Error) -> MetricsError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    MetricsError::InvalidRow {
        line,
        reason: e.to_string(),
    }
}

fn header_names<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect())
}

/// Parses `user_id,method,task,category,sample_id,score`.
pub fn parse_annotations<R: Read>(input: R) -> Result<Vec<AnnotationRow>> {
    let mut rdr = csv_reader(input);
    let header = header_names(&mut rdr)?;
    if header != ANNOTATION_HEADER {
        return Err(MetricsError::InvalidRow {
            line: 1,
            reason: format!("expected header {}, got {}", ANNOTATION_HEADER.join(","), header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at_line = |e: MetricsError| match e {
            MetricsError::InvalidRow { reason, .. } => MetricsError::InvalidRow { line, reason },
            other => other,
        };
        let task: TaskKind = record[2].parse().map_err(|e: prefloop_core::Error| MetricsError::InvalidRow {
            line,
            reason: e.to_string(),
        })?;
        let score: f64 = record[5].parse().map_err(|_| MetricsError::InvalidRow {
            line,
            reason: format!("score {:?} is not a number", &record[5]),
        })?;
        rows.push(AnnotationRow::new(&record[0], &record[1], task, &record[3], &record[4], score).map_err(at_line)?);
    }
    Ok(rows)
}

/// Parses `sample_id,score` (attributed to `default_method`) or
/// `method,sample_id,score`.
pub fn parse_predictions<R: Read>(input: R, default_method: &str) -> Result<Vec<Prediction>> {
    let mut rdr = csv_reader(input);
    let header = header_names(&mut rdr)?;
    let with_method = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["sample_id", "score"] => false,
        ["method", "sample_id", "score"] => true,
        _ => {
            return Err(MetricsError::InvalidRow {
                line: 1,
                reason: format!("expected header sample_id,score or method,sample_id,score, got {}", header.join(",")),
            })
        }
    };
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let off = usize::from(with_method);
        let method = if with_method { &record[0] } else { default_method };
        let score: f64 = record[off + 1].parse().map_err(|_| MetricsError::InvalidRow {
            line,
            reason: format!("score {:?} is not a number", &record[off + 1]),
        })?;
        if !score.is_finite() {
            return Err(MetricsError::InvalidRow {
                line,
                reason: "score is not finite".into(),
            });
        }
        if method.is_empty() || record[off].is_empty() {
            return Err(MetricsError::InvalidRow {
                line,
                reason: "method and sample_id must be non-empty".into(),
            });
        }
        out.push(Prediction {
            method: method.to_string(),
            sample_id: record[off].to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>> {
    parse_annotations(std::fs::File::open(path)?)
}

/// Reads a predictions file; a file without a method column is named after
/// its stem.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
    parse_predictions(std::fs::File::open(path)?, stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_tables() {
        assert_eq!(canonical_category(TaskKind::T2V, "ocr").unwrap(), "OCR");
        assert!(matches!(
            canonical_category(TaskKind::I2I, "Scene"),
            Err(MetricsError::UnknownCategory { .. })
        ));
        assert!(canonical_category(TaskKind::V2V, "Removal").is_ok());
        assert!(canonical_category(TaskKind::T2I, "Removal").is_err());
    }

    #[test]
    fn parses_annotations() {
        let text = "user_id,method,task,category,sample_id,score\nu1, m1 ,t2i,single,s1,80\nu2,m1,T2I,Two,s2,55.5\n";
        let rows = parse_annotations(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method_name, "m1");
        assert_eq!(rows[0].category, "Single");
        assert_eq!(rows[1].user_score.value(), 55.5);
    }

    #[test]
    fn annotation_errors_carry_lines() {
        let text = "user_id,method,task,category,sample_id,score\nu1,m1,T2I,Single,s1,80\nu1,m1,I2I,Scene,s2,80\n";
        assert!(matches!(parse_annotations(text.as_bytes()), Err(MetricsError::UnknownCategory { .. })));
        let text = "user_id,method,task,category,sample_id,score\nu1,m1,T2I,Single,s1,180\n";
        assert!(matches!(parse_annotations(text.as_bytes()), Err(MetricsError::InvalidRow { line: 2, .. })));
        let text = "user,method,task,category,sample_id,score\n";
        assert!(matches!(parse_annotations(text.as_bytes()), Err(MetricsError::InvalidRow { line: 1, .. })));
        let text = "user_id,method,task,category,sample_id,score\nu1,m1,X9,Single,s1,10\n";
        assert!(matches!(parse_annotations(text.as_bytes()), Err(MetricsError::InvalidRow { line: 2, .. })));
    }

    #[test]
    fn parses_predictions_both_shapes() {
        let p = parse_predictions("sample_id,score\ns1,0.25\ns2,-3\n".as_bytes(), "clip").unwrap();
        assert_eq!(p[1], Prediction { method: "clip".into(), sample_id: "s2".into(), score: -3.0 });
        let p = parse_predictions("method,sample_id,score\na,s1,1\nb,s1,2\n".as_bytes(), "x").unwrap();
        assert_eq!(p[1].method, "b");
        assert!(parse_predictions("id,score\n".as_bytes(), "x").is_err());
        assert!(parse_predictions("sample_id,score\ns1,nan\n".as_bytes(), "x").is_err());
    }
}
