//! Correlation metrics and benchmark aggregation for preference studies.
//!
//! [`correlation`] holds SRCC, KRCC (tau-b) and PLCC. [`report`] turns
//! annotation rows into per-task category tables of normalized user scores
//! and correlates evaluator predictions with each user's own scores.
//! Independent cells are aggregated on the rayon pool when the `parallel`
//! feature is on (the default); [`Strategy::Sequential`] is always available.

pub mod annotation;
pub mod correlation;
pub mod error;
pub mod normalize;
pub mod render;
pub mod report;

pub use annotation::{
    canonical_category, categories, parse_annotations, parse_predictions, read_annotations, read_predictions,
    AnnotationRow, Prediction,
};
pub use correlation::{krcc, plcc, srcc, Coefficients, PairedSeries};
pub use error::{MetricsError, Result};
pub use normalize::normalize_user_scores;
pub use render::{render_evaluation, render_generation, write_report_dir, BenchReport};
pub use report::{
    aggregate_evaluation_report, aggregate_evaluation_report_with, aggregate_generation_report,
    aggregate_generation_report_with, EvaluationReport, GenerationReport, Strategy,
};
