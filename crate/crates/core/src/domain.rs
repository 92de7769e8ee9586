//! Shared domain types.
//!
//! Every score in the system (user preference `p`, VQA `v`, final `f`,
//! post-generation feedback `u`) lives on one 0–100 scale so the threshold
//! regulator can mix them arithmetically.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::executor::LoopTrace;

/// Generation task kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    T2I,
    I2I,
    T2V,
    I2V,
    V2V,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::T2I,
        TaskKind::I2I,
        TaskKind::T2V,
        TaskKind::I2V,
        TaskKind::V2V,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::T2I => "T2I",
            TaskKind::I2I => "I2I",
            TaskKind::T2V => "T2V",
            TaskKind::I2V => "I2V",
            TaskKind::V2V => "V2V",
        }
    }

    /// Kind of source media the task consumes, if any.
    pub fn input_media_kind(self) -> Option<MediaKind> {
        match self {
            TaskKind::T2I | TaskKind::T2V => None,
            TaskKind::I2I | TaskKind::I2V => Some(MediaKind::Image),
            TaskKind::V2V => Some(MediaKind::Video),
        }
    }

    pub fn output_media_kind(self) -> MediaKind {
        match self {
            TaskKind::T2I | TaskKind::I2I => MediaKind::Image,
            TaskKind::T2V | TaskKind::I2V | TaskKind::V2V => MediaKind::Video,
        }
    }

    /// Checks that the presence and kind of `media` suit this task.
    pub fn check_input_media(self, media: Option<&MediaRef>) -> Result<()> {
        match (self.input_media_kind(), media) {
            (None, None) => Ok(()),
            (None, Some(_)) => Err(Error::MediaMismatch {
                task: self,
                reason: "task takes no input media but media was attached".into(),
            }),
            (Some(kind), None) => Err(Error::MediaMismatch {
                task: self,
                reason: format!("task requires an input {kind}"),
            }),
            (Some(kind), Some(m)) if m.kind != kind => Err(Error::MediaMismatch {
                task: self,
                reason: format!("task requires an input {kind}, got {}", m.kind),
            }),
            (Some(_), Some(_)) => Ok(()),
        }
    }
}

pub fn requires_input_media(task: TaskKind) -> bool {
    task.input_media_kind().is_some()
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// Open- or closed-source generator selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceChoice {
    #[default]
    Open,
    Closed,
}

impl fmt::Display for SourceChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceChoice::Open => f.write_str("Open"),
            SourceChoice::Closed => f.write_str("Closed"),
        }
    }
}

impl FromStr for SourceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(SourceChoice::Open),
            "closed" => Ok(SourceChoice::Closed),
            _ => Err(Error::Invalid(format!("unknown source choice {s:?}"))),
        }
    }
}

/// A score on the shared 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const MIN: f64 = 0.0;
    pub const MAX: f64 = 100.0;

    pub fn new(value: f64) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Score(value))
        } else {
            Err(Error::OutOfRange { value })
        }
    }

    /// Clamps any finite value into range; NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Score(Self::MIN)
        } else {
            Score(value.clamp(Self::MIN, Self::MAX))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn validate_score(raw: f64) -> Result<Score> {
    Score::new(raw)
}

impl TryFrom<f64> for Score {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Score::new(value)
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl MediaKind {
    const VIDEO_EXTENSIONS: [&'static str; 8] =
        ["mp4", "mov", "webm", "mkv", "avi", "m4v", "mpg", "mpeg"];

    /// Guesses the kind from a path or URI extension; anything not a known
    /// video container is treated as an image.
    pub fn from_extension(uri: &str) -> Self {
        let ext = uri
            .rsplit_once('.')
            .map(|(_, ext)| ext.to_ascii_lowercase())
            .unwrap_or_default();
        if Self::VIDEO_EXTENSIONS.contains(&ext.as_str()) {
            MediaKind::Video
        } else {
            MediaKind::Image
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MediaKind::Image => f.write_str("image"),
            MediaKind::Video => f.write_str("video"),
        }
    }
}

/// Opaque reference to an image or video. `content_hash` is the identity;
/// URIs are locators only and never compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub kind: MediaKind,
    pub uri: String,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl MediaRef {
    pub fn new(kind: MediaKind, uri: impl Into<String>, content_hash: impl Into<String>) -> Result<Self> {
        let media = MediaRef {
            kind,
            uri: uri.into(),
            content_hash: content_hash.into(),
            width: None,
            height: None,
            duration_s: None,
        };
        media.validate()?;
        Ok(media)
    }

    /// Builds a reference for a local path or remote URI. Local files are
    /// hashed by content; anything unreadable is hashed by its locator.
    pub fn from_uri(uri: &str, kind: Option<MediaKind>) -> Result<Self> {
        if uri.trim().is_empty() {
            return Err(Error::Invalid("media uri is empty".into()));
        }
        let kind = kind.unwrap_or_else(|| MediaKind::from_extension(uri));
        let hash = match std::fs::read(uri) {
            Ok(bytes) => content_digest(&bytes),
            Err(_) => content_digest(uri.as_bytes()),
        };
        MediaRef::new(kind, uri, hash)
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_hash.is_empty() {
            return Err(Error::Invalid("media content_hash is empty".into()));
        }
        if self.kind == MediaKind::Image && self.duration_s.is_some() {
            return Err(Error::Invalid("duration_s is only valid for video".into()));
        }
        Ok(())
    }
}

/// Hex SHA-256 of `bytes`.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Bootstrap,
    Generated,
}

/// UTC timestamp truncated to whole seconds.
pub fn now_utc() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(0)
}

pub(crate) mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|ts| ts.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// One entry of a user's preference memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub record_id: String,
    pub user_id: String,
    pub task: TaskKind,
    pub sample: MediaRef,
    pub vqa_score: Score,
    #[serde(default)]
    pub user_score: Option<Score>,
    pub prompt_used: String,
    pub origin: Origin,
    #[serde(with = "utc_seconds")]
    pub created_at: DateTime<Utc>,
}

impl MemoryRecord {
    pub fn validate(&self) -> Result<()> {
        if self.record_id.is_empty() {
            return Err(Error::Invalid("record_id is empty".into()));
        }
        if self.user_id.is_empty() {
            return Err(Error::Invalid("user_id is empty".into()));
        }
        if self.origin == Origin::Bootstrap && self.user_score.is_none() {
            return Err(Error::Invalid(format!(
                "bootstrap record {} has no user score",
                self.record_id
            )));
        }
        self.sample.validate()?;
        if self.sample.kind != self.task.output_media_kind() {
            return Err(Error::MediaMismatch {
                task: self.task,
                reason: format!("record sample is an {}", self.sample.kind),
            });
        }
        Ok(())
    }

    /// The preference value used by the threshold regulator: the user score
    /// when present, otherwise the VQA score.
    pub fn effective_preference(&self) -> f64 {
        self.user_score.unwrap_or(self.vqa_score).value()
    }
}

/// Coefficients and loop budget for the adaptive threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegulatorConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub max_iterations: u32,
    pub default_threshold: Score,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        RegulatorConfig {
            beta1: 1.0,
            beta2: 0.1,
            max_iterations: 3,
            default_threshold: Score(60.0),
        }
    }
}

impl RegulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1.is_finite() && self.beta1 >= 0.0) {
            return Err(Error::Invalid(format!("beta1 must be >= 0, got {}", self.beta1)));
        }
        if !(self.beta2.is_finite() && self.beta2 >= 0.0) {
            return Err(Error::Invalid(format!("beta2 must be >= 0, got {}", self.beta2)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// The planner's output for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub task: TaskKind,
    pub task_prompt: String,
    pub user_id: String,
    pub source_choice: SourceChoice,
    pub threshold: Score,
    pub budget: u32,
}

impl Plan {
    pub fn new(
        task: TaskKind,
        task_prompt: String,
        user_id: String,
        source_choice: SourceChoice,
        threshold: Score,
        budget: u32,
    ) -> Result<Self> {
        let plan = Plan {
            task,
            task_prompt,
            user_id,
            source_choice,
            threshold,
            budget,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Invalid("plan budget must be >= 1".into()));
        }
        if self.task_prompt.trim().is_empty() {
            return Err(Error::Precondition("task prompt is empty".into()));
        }
        Ok(())
    }
}

/// Executor output: the chosen sample with its scores, reasoning and trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub result_id: String,
    pub output: MediaRef,
    pub vqa_score: Score,
    pub final_score: Score,
    pub reasoning: String,
    pub prompt_trail: Vec<String>,
    pub iterations_used: u32,
    pub threshold_met: bool,
    pub trace: LoopTrace,
}

impl ResultBundle {
    pub fn validate(&self, plan: &Plan) -> Result<()> {
        if self.iterations_used == 0 || self.iterations_used > plan.budget {
            return Err(Error::Invalid(format!(
                "iterations_used {} outside [1, {}]",
                self.iterations_used, plan.budget
            )));
        }
        if self.prompt_trail.len() != self.iterations_used as usize {
            return Err(Error::Invalid(format!(
                "prompt trail has {} entries for {} iterations",
                self.prompt_trail.len(),
                self.iterations_used
            )));
        }
        if self.threshold_met != (self.final_score >= plan.threshold) {
            return Err(Error::Invalid("threshold_met disagrees with final score".into()));
        }
        if self.reasoning.trim().is_empty() {
            return Err(Error::Invalid("reasoning is empty".into()));
        }
        if self.output.kind != plan.task.output_media_kind() {
            return Err(Error::MediaMismatch {
                task: plan.task,
                reason: format!("generated output is an {}", self.output.kind),
            });
        }
        Ok(())
    }
}

/// Per-user, per-task derived preference state. Computed on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub user_id: String,
    pub task: TaskKind,
    pub preference_prompt: String,
    pub threshold: Score,
    pub intra_record_count: usize,
    pub total_record_count: usize,
}
