//! Operations shared by the HTTP handlers and the CLI. Each front end only
//! decodes its inputs into these calls, so validation is identical.

use std::path::Path;

use prefloop_core::engine::{BootstrapOutcome, Engine, GenerateInput, SampleInput, Session, Summary};
use prefloop_core::{PreferenceProfile, SourceChoice, TaskKind};
use prefloop_metrics::{
    aggregate_evaluation_report, aggregate_generation_report, parse_annotations, parse_predictions, BenchReport,
};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub fn parse_task(text: &str) -> Result<TaskKind, ServiceError> {
    Ok(text.parse()?)
}

pub fn parse_source(text: &str) -> Result<SourceChoice, ServiceError> {
    Ok(text.parse()?)
}

pub fn bootstrap(
    engine: &Engine,
    user_id: &str,
    task: &str,
    samples: &[SampleInput],
    session: Option<&Session>,
) -> Result<BootstrapOutcome, ServiceError> {
    let task = parse_task(task)?;
    Ok(engine.bootstrap(user_id, task, samples, session)?)
}

pub fn generate(
    engine: &Engine,
    user_id: &str,
    input: &GenerateInput,
    session: Option<&Session>,
) -> Result<Summary, ServiceError> {
    Ok(engine.generate(user_id, input, session)?)
}

pub fn rate(engine: &Engine, result_id: &str, score: f64) -> Result<PreferenceProfile, ServiceError> {
    Ok(engine.feedback(result_id, score)?)
}

pub fn profile(engine: &Engine, user_id: &str, task: &str) -> Result<PreferenceProfile, ServiceError> {
    Ok(engine.profile(user_id, parse_task(task)?)?)
}

/// One uploaded predictions table. Without a method column its rows are
/// attributed to `method`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionUpload {
    #[serde(default = "default_method")]
    pub method: String,
    pub csv: String,
}

fn default_method() -> String {
    "predictions".to_string()
}

pub fn bench_report(annotations_csv: &str, predictions: &[PredictionUpload]) -> Result<BenchReport, ServiceError> {
    let rows = parse_annotations(annotations_csv.as_bytes())?;
    let generation = aggregate_generation_report(&rows)?;
    let evaluation = if predictions.is_empty() {
        None
    } else {
        let mut all = Vec::new();
        for upload in predictions {
            all.extend(parse_predictions(upload.csv.as_bytes(), &upload.method)?);
        }
        Some(aggregate_evaluation_report(&all, &rows)?)
    };
    Ok(BenchReport { generation, evaluation })
}

/// Reads the CLI's samples file: CSV with header `media_uri,score[,prompt]`,
/// or a JSON array of `{media_uri, score, prompt?}` when the file ends in
/// `.json`.
pub fn read_samples(path: &Path) -> Result<Vec<SampleInput>, ServiceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::BadRequest(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    if header.len() < 2 || header[0] != "media_uri" || header[1] != "score" || (header.len() == 3 && header[2] != "prompt") || header.len() > 3 {
        return Err(ServiceError::BadRequest(format!(
            "samples header must be media_uri,score[,prompt], got {}",
            header.join(",")
        )));
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 || record.len() > 3 {
            return Err(ServiceError::BadRequest(format!("line {line}: expected 2 or 3 fields")));
        }
        let score = record[1]
            .parse::<f64>()
            .map_err(|_| ServiceError::BadRequest(format!("line {line}: score {:?} is not a number", &record[1])))?;
        samples.push(SampleInput {
            media_uri: record[0].to_string(),
            score,
            prompt: record.get(2).unwrap_or("").to_string(),
        });
    }
    Ok(samples)
}
