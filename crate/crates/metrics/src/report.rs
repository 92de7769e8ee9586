//! Aggregation of annotation rows into per-task benchmark tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use prefloop_core::TaskKind;
use serde::{Deserialize, Serialize};

use crate::annotation::{categories, AnnotationRow, Prediction};
use crate::correlation::{Coefficients, PairedSeries};
use crate::error::{MetricsError, Result};
use crate::normalize::normalize_values;

pub const OVERALL: &str = "Overall";

/// How independent aggregation units (task/method cells, users) are processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled and
    /// otherwise behaves like `Sequential`.
    Parallel,
}

impl Default for Strategy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Strategy::Parallel
        } else {
            Strategy::Sequential
        }
    }
}

fn map_items<T, R, F>(strategy: Strategy, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match strategy {
        #[cfg(feature = "parallel")]
        Strategy::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Order-independent mean: values are sorted before summation so that row
/// permutations give bit-identical results.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptyCell {
    pub method: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub method: String,
    /// Mean normalized score per category, aligned with the table's columns.
    pub cells: Vec<Option<f64>>,
    /// Mean of the non-empty category means; empty categories are listed
    /// in the table's `empty_cells` instead of counting as zero.
    pub overall: Option<f64>,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTable {
    pub task: TaskKind,
    pub categories: Vec<String>,
    pub rows: Vec<GenerationRow>,
    pub empty_cells: Vec<EmptyCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub tables: Vec<GenerationTable>,
}

pub fn aggregate_generation_report(rows: &[AnnotationRow]) -> Result<GenerationReport> {
    aggregate_generation_report_with(rows, Strategy::default())
}

/// Normalizes each user's scores within a task over the user's full score
/// list, averages per user inside each (method, category) cell and then
/// across users.
pub fn aggregate_generation_report_with(rows: &[AnnotationRow], strategy: Strategy) -> Result<GenerationReport> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let tasks: Vec<TaskKind> = TaskKind::ALL.iter().copied().filter(|t| rows.iter().any(|r| r.task == *t)).collect();
    let tables = map_items(strategy, &tasks, |&task| generation_table(rows, task, strategy));
    Ok(GenerationReport { tables })
}

/// category -> user -> normalized values, for one method.
type CategoryCells<'a> = HashMap<&'a str, BTreeMap<&'a str, Vec<f64>>>;

fn generation_table(rows: &[AnnotationRow], task: TaskKind, strategy: Strategy) -> GenerationTable {
    let task_rows: Vec<&AnnotationRow> = rows.iter().filter(|r| r.task == task).collect();

    let mut by_user: BTreeMap<&str, Vec<&AnnotationRow>> = BTreeMap::new();
    for r in &task_rows {
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }
    let users: Vec<(&str, Vec<&AnnotationRow>)> = by_user.into_iter().collect();
    let normalized: Vec<Vec<(&AnnotationRow, f64)>> = map_items(strategy, &users, |(_, list)| {
        let raw: Vec<f64> = list.iter().map(|r| r.user_score.value()).collect();
        list.iter().copied().zip(normalize_values(&raw)).collect()
    });

    let mut cells: BTreeMap<&str, CategoryCells> = BTreeMap::new();
    for (row, value) in normalized.iter().flatten() {
        cells
            .entry(row.method_name.as_str())
            .or_default()
            .entry(row.category.as_str())
            .or_default()
            .entry(row.user_id.as_str())
            .or_default()
            .push(*value);
    }

    let columns = categories(task);
    let methods: Vec<(&str, CategoryCells)> = cells.into_iter().collect();
    let table_rows: Vec<GenerationRow> = map_items(strategy, &methods, |(method, by_category)| {
        let mut users = BTreeSet::new();
        let cells: Vec<Option<f64>> = columns
            .iter()
            .map(|c| {
                by_category.get(c).map(|per_user| {
                    let mut user_means: Vec<f64> = per_user
                        .iter()
                        .map(|(user, values)| {
                            users.insert(*user);
                            stable_mean(&mut values.clone())
                        })
                        .collect();
                    stable_mean(&mut user_means)
                })
            })
            .collect();
        let present: Vec<f64> = cells.iter().flatten().copied().collect();
        let overall = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        GenerationRow {
            method: method.to_string(),
            cells,
            overall,
            users: users.len(),
        }
    });

    let empty_cells = table_rows
        .iter()
        .flat_map(|row| {
            row.cells.iter().zip(columns.iter()).filter(|(v, _)| v.is_none()).map(|(_, c)| EmptyCell {
                method: row.method.clone(),
                category: c.to_string(),
            })
        })
        .collect();

    GenerationTable {
        task,
        categories: columns.iter().map(|c| c.to_string()).collect(),
        rows: table_rows,
        empty_cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCell {
    /// Coefficients averaged over users; absent when no user had a usable series.
    pub coefficients: Option<Coefficients>,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub method: String,
    /// Aligned with the report's scopes.
    pub cells: Vec<EvaluationCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub method: String,
    pub scope: String,
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Task columns present in the annotations followed by `Overall`.
    pub scopes: Vec<String>,
    pub rows: Vec<EvaluationRow>,
    pub skipped: Vec<SkippedUser>,
}

pub fn aggregate_evaluation_report(predictions: &[Prediction], rows: &[AnnotationRow]) -> Result<EvaluationReport> {
    aggregate_evaluation_report_with(predictions, rows, Strategy::default())
}

/// Correlates each method's predictions with every user's own scores, per
/// task and over all of a user's samples, and averages the coefficients
/// across users. Users whose series is too short or constant are skipped and
/// listed.
pub fn aggregate_evaluation_report_with(
    predictions: &[Prediction],
    rows: &[AnnotationRow],
    strategy: Strategy,
) -> Result<EvaluationReport> {
    if rows.is_empty() || predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let annotated: BTreeSet<&str> = rows.iter().map(|r| r.sample_id.as_str()).collect();
    let orphans: BTreeSet<&str> = predictions
        .iter()
        .map(|p| p.sample_id.as_str())
        .filter(|s| !annotated.contains(s))
        .collect();
    if !orphans.is_empty() {
        return Err(MetricsError::JoinFailure {
            orphans: orphans.into_iter().map(String::from).collect(),
        });
    }

    let mut by_method: BTreeMap<&str, HashMap<&str, f64>> = BTreeMap::new();
    for p in predictions {
        if by_method.entry(p.method.as_str()).or_default().insert(p.sample_id.as_str(), p.score).is_some() {
            return Err(MetricsError::DuplicatePrediction {
                method: p.method.clone(),
                sample_id: p.sample_id.clone(),
            });
        }
    }

    let tasks: Vec<TaskKind> = TaskKind::ALL.iter().copied().filter(|t| rows.iter().any(|r| r.task == *t)).collect();
    let mut scopes: Vec<Option<TaskKind>> = tasks.iter().copied().map(Some).collect();
    scopes.push(None);
    let scope_name = |s: &Option<TaskKind>| s.map(|t| t.to_string()).unwrap_or_else(|| OVERALL.to_string());

    let methods: Vec<(&str, HashMap<&str, f64>)> = by_method.into_iter().collect();
    let results = map_items(strategy, &methods, |(method, predicted)| {
        let mut skipped = Vec::new();
        let cells = scopes
            .iter()
            .map(|scope| {
                // user -> (sample_id, predicted, observed)
                let mut per_user: BTreeMap<&str, Vec<(&str, f64, f64)>> = BTreeMap::new();
                for r in rows.iter().filter(|r| scope.is_none_or(|t| r.task == t)) {
                    if let Some(p) = predicted.get(r.sample_id.as_str()) {
                        per_user
                            .entry(r.user_id.as_str())
                            .or_default()
                            .push((r.sample_id.as_str(), *p, r.user_score.value()));
                    }
                }
                let mut usable = Vec::new();
                for (user, mut pairs) in per_user {
                    pairs.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
                    let series = PairedSeries::new(
                        pairs.iter().map(|p| p.1).collect(),
                        pairs.iter().map(|p| p.2).collect(),
                    );
                    match series {
                        Ok(s) => usable.push(Coefficients::of(&s)),
                        Err(e) => skipped.push(SkippedUser {
                            method: method.to_string(),
                            scope: scope_name(scope),
                            user_id: user.to_string(),
                            reason: e.code().to_string(),
                        }),
                    }
                }
                let coefficients = (!usable.is_empty()).then(|| {
                    let n = usable.len() as f64;
                    Coefficients {
                        srcc: usable.iter().map(|c| c.srcc).sum::<f64>() / n,
                        krcc: usable.iter().map(|c| c.krcc).sum::<f64>() / n,
                        plcc: usable.iter().map(|c| c.plcc).sum::<f64>() / n,
                    }
                });
                EvaluationCell {
                    coefficients,
                    users: usable.len(),
                }
            })
            .collect();
        (
            EvaluationRow {
                method: method.to_string(),
                cells,
            },
            skipped,
        )
    });

    let mut report = EvaluationReport {
        scopes: scopes.iter().map(scope_name).collect(),
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for (row, skipped) in results {
        report.rows.push(row);
        report.skipped.extend(skipped);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(user: &str, method: &str, task: TaskKind, cat: &str, sample: &str, score: f64) -> AnnotationRow {
        AnnotationRow::new(user, method, task, cat, sample, score).unwrap()
    }

    #[test]
    fn two_category_example() {
        // u1 normalizes to Single=0, Two=100; u2 to Single=100, Two={0, 100}.
        let rows = vec![
            row("u1", "m", TaskKind::T2I, "Single", "a", 20.0),
            row("u1", "m", TaskKind::T2I, "Two", "b", 80.0),
            row("u2", "m", TaskKind::T2I, "Single", "c", 90.0),
            row("u2", "m", TaskKind::T2I, "Two", "d", 10.0),
            row("u2", "m", TaskKind::T2I, "Two", "e", 90.0),
        ];
        let report = aggregate_generation_report(&rows).unwrap();
        let t = &report.tables[0];
        assert_eq!(t.rows[0].cells[0], Some(50.0));
        assert_eq!(t.rows[0].cells[1], Some(75.0));
        assert_eq!(t.rows[0].overall, Some(62.5));
        assert_eq!(t.empty_cells.len(), 8);
    }

    #[test]
    fn single_row_is_fifty() {
        let rows = vec![row("u", "m", TaskKind::V2V, "OCR", "a", 33.0)];
        let t = &aggregate_generation_report(&rows).unwrap().tables[0];
        assert_eq!(t.rows[0].cells[7], Some(50.0));
    }

    #[test]
    fn evaluation_averages_coefficients_across_users() {
        let obs1 = [1.0, 3.0, 2.0, 4.0, 5.0]; // srcc 0.9 against 1..5
        let obs2 = [2.0, 1.0, 3.0, 5.0, 4.0]; // srcc 0.8
        let mut rows = Vec::new();
        let mut preds = Vec::new();
        for i in 0..5 {
            let s = format!("s{i}");
            rows.push(row("u1", "g", TaskKind::T2V, "Single", &s, obs1[i] * 10.0));
            rows.push(row("u2", "g", TaskKind::T2V, "Single", &s, obs2[i] * 10.0));
            preds.push(Prediction { method: "e".into(), sample_id: s, score: i as f64 });
        }
        let report = aggregate_evaluation_report(&preds, &rows).unwrap();
        assert_eq!(report.scopes, vec!["T2V", "Overall"]);
        let c = report.rows[0].cells[0].coefficients.unwrap();
        assert!((c.srcc - 0.85).abs() < 1e-12);
        assert_eq!(report.rows[0].cells[1], report.rows[0].cells[0]);
    }

    #[test]
    fn evaluation_join_failure_and_skips() {
        let rows = vec![
            row("u1", "g", TaskKind::T2I, "Single", "a", 10.0),
            row("u1", "g", TaskKind::T2I, "Single", "b", 10.0),
        ];
        let preds = vec![
            Prediction { method: "e".into(), sample_id: "a".into(), score: 1.0 },
            Prediction { method: "e".into(), sample_id: "zz".into(), score: 1.0 },
        ];
        assert_eq!(
            aggregate_evaluation_report(&preds, &rows),
            Err(MetricsError::JoinFailure { orphans: vec!["zz".into()] })
        );
        let preds = vec![
            Prediction { method: "e".into(), sample_id: "a".into(), score: 1.0 },
            Prediction { method: "e".into(), sample_id: "b".into(), score: 2.0 },
        ];
        let report = aggregate_evaluation_report(&preds, &rows).unwrap();
        assert_eq!(report.rows[0].cells[0].coefficients, None);
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.skipped[0].reason, "DegenerateSeries");
    }
}
