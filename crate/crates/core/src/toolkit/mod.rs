//! Uniform adapter protocol for external models.
//!
//! Every prompt tool, generator, VQA evaluator and general-purpose MLLM is
//! described by a [`ToolDescriptor`], resolved through the [`ToolRegistry`]
//! by `(kind, task, source)`, and called with a [`ToolRequest`]. Descriptors
//! whose endpoint is `mock` are served by deterministic in-process mocks;
//! anything else is POSTed over HTTP.

mod defaults;
pub mod mock;
mod registry;
mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{MediaRef, Score, SourceChoice, TaskKind};
use crate::error::{Error, Result};

pub use defaults::default_descriptors;
pub use mock::{HashMock, ScriptMock};
pub use registry::{backoff_ceiling_ms, ToolRegistry, BACKOFF_BASE_MS};
pub use remote::RemoteAdapter;

/// Endpoint value that selects an in-process mock adapter.
pub const MOCK_ENDPOINT: &str = "mock";

/// Request parameter naming the session whose script-mock cursor to use.
/// Never part of a mock's content hash.
pub const SESSION_PARAM: &str = "session_id";

/// Request parameter telling an MLLM which job it is doing.
pub const OPERATION_PARAM: &str = "operation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolKind {
    PromptTool,
    GenTool,
    EvalTool,
    MllmTool,
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ToolKind::PromptTool => "PromptTool",
            ToolKind::GenTool => "GenTool",
            ToolKind::EvalTool => "EvalTool",
            ToolKind::MllmTool => "MllmTool",
        };
        f.write_str(s)
    }
}

/// Task a tool serves: one kind or any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskSlot {
    Task(TaskKind),
    Any,
}

/// Source class a tool serves: open, closed or any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceSlot {
    Source(SourceChoice),
    Any,
}

impl fmt::Display for TaskSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSlot::Task(t) => t.fmt(f),
            TaskSlot::Any => f.write_str("Any"),
        }
    }
}

impl fmt::Display for SourceSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSlot::Source(s) => s.fmt(f),
            SourceSlot::Any => f.write_str("Any"),
        }
    }
}

impl FromStr for TaskSlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("any") {
            Ok(TaskSlot::Any)
        } else {
            s.parse().map(TaskSlot::Task)
        }
    }
}

impl FromStr for SourceSlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("any") {
            Ok(SourceSlot::Any)
        } else {
            s.parse().map(SourceSlot::Source)
        }
    }
}

macro_rules! display_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

display_serde!(TaskSlot);
display_serde!(SourceSlot);

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub tool_id: String,
    pub kind: ToolKind,
    pub task: TaskSlot,
    pub source: SourceSlot,
    /// HTTP URL, or `mock`.
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Free-form adapter parameters. Evaluators must declare `native_min`
    /// and `native_max`; mocks read `script`, `vqa_weight`, `match_weight`.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl ToolDescriptor {
    pub fn mock(tool_id: &str, kind: ToolKind, task: TaskSlot, source: SourceSlot) -> Self {
        let mut params = BTreeMap::new();
        if kind == ToolKind::EvalTool {
            params.insert("native_min".into(), "0".into());
            params.insert("native_max".into(), "100".into());
        }
        ToolDescriptor {
            tool_id: tool_id.into(),
            kind,
            task,
            source,
            endpoint: MOCK_ENDPOINT.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            params,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == MOCK_ENDPOINT
    }

    pub fn param_f64(&self, key: &str) -> Result<Option<f64>> {
        self.params
            .get(key)
            .map(|raw| {
                raw.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidDescriptor(format!("{}: param {key}={raw:?} is not a number", self.tool_id))
                })
            })
            .transpose()
    }

    /// Linear map from the tool's native score range onto 0–100.
    pub fn native_range(&self) -> Result<Option<(f64, f64)>> {
        match (self.param_f64("native_min")?, self.param_f64("native_max")?) {
            (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
            (None, None) => Ok(None),
            _ => Err(Error::InvalidDescriptor(format!(
                "{}: native_min and native_max must be declared together",
                self.tool_id
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDescriptor(format!("{}: {msg}", self.tool_id)));
        if self.tool_id.trim().is_empty() {
            return Err(Error::InvalidDescriptor("tool_id is empty".into()));
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive".into());
        }
        if self.max_retries > 10 {
            return bad(format!("max_retries {} is too large", self.max_retries));
        }
        if !self.is_mock()
            && !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://"))
        {
            return bad(format!("endpoint {:?} is neither a URL nor \"mock\"", self.endpoint));
        }
        match self.native_range()? {
            Some((lo, hi)) if !(lo.is_finite() && hi.is_finite() && hi > lo) => {
                return bad(format!("native range [{lo}, {hi}] is empty"));
            }
            None if self.kind == ToolKind::EvalTool => {
                return bad("evaluators must declare native_min/native_max".into());
            }
            _ => {}
        }
        if let Some(script) = self.params.get("script") {
            mock::parse_script(script).map_err(|e| Error::InvalidDescriptor(format!("{}: {e}", self.tool_id)))?;
        }
        Ok(())
    }

    /// Maps a native score onto 0–100. Values already on the scale pass
    /// through when no native range is declared.
    pub fn rescale(&self, raw: f64) -> Result<Score> {
        let value = match self.native_range()? {
            Some((lo, hi)) => (raw - lo) / (hi - lo) * 100.0,
            None => raw,
        };
        // Tolerate float noise at the range ends.
        let value = if (-1e-9..0.0).contains(&value) {
            0.0
        } else if (100.0..100.0 + 1e-9).contains(&value) {
            100.0
        } else {
            value
        };
        Score::new(value).map_err(|_| Error::ToolFailure {
            tool_id: self.tool_id.clone(),
            stage: None,
            attempts: 1,
            cause: format!("score {raw} outside the declared native range"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub kind: ToolKind,
    pub task: TaskKind,
    #[serde(default)]
    pub prompts: BTreeMap<String, String>,
    #[serde(default)]
    pub media: BTreeMap<String, MediaRef>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub seed: u64,
}

impl ToolRequest {
    pub fn new(kind: ToolKind, task: TaskKind, seed: u64) -> Self {
        ToolRequest {
            kind,
            task,
            prompts: BTreeMap::new(),
            media: BTreeMap::new(),
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn prompt(mut self, name: &str, text: impl Into<String>) -> Self {
        self.prompts.insert(name.into(), text.into());
        self
    }

    pub fn media(mut self, name: &str, media: MediaRef) -> Self {
        self.media.insert(name.into(), media);
        self
    }

    pub fn param(mut self, name: &str, value: impl ToString) -> Self {
        self.params.insert(name.into(), value.to_string());
        self
    }

    pub fn session(self, session_id: Option<&str>) -> Self {
        match session_id {
            Some(id) => self.param(SESSION_PARAM, id),
            None => self,
        }
    }
}

/// Response as produced by an adapter, before scores are mapped onto 0–100.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawToolResponse {
    #[serde(default)]
    pub text_output: Option<String>,
    #[serde(default)]
    pub media_output: Option<MediaRef>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_output: Option<MediaRef>,
    #[serde(default)]
    pub scores: BTreeMap<String, Score>,
    pub latency_ms: u64,
}

impl ToolResponse {
    pub fn score(&self, name: &str) -> Option<Score> {
        self.scores.get(name).copied()
    }
}

/// One failed adapter call.
#[derive(Debug, Clone, PartialEq)]
pub struct CallError {
    pub retryable: bool,
    pub cause: String,
}

impl CallError {
    pub fn transient(cause: impl Into<String>) -> Self {
        CallError {
            retryable: true,
            cause: cause.into(),
        }
    }

    pub fn fatal(cause: impl Into<String>) -> Self {
        CallError {
            retryable: false,
            cause: cause.into(),
        }
    }
}

/// Backend behind a registered descriptor.
pub trait ToolAdapter: Send + Sync {
    fn call(&self, descriptor: &ToolDescriptor, request: &ToolRequest) -> Result<RawToolResponse, CallError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_round_trip_as_strings() {
        let d = ToolDescriptor::mock("x", ToolKind::EvalTool, TaskSlot::Task(TaskKind::T2V), SourceSlot::Any);
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["task"], "T2V");
        assert_eq!(json["source"], "Any");
        let back: ToolDescriptor = serde_json::from_value(json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rescale_maps_native_range() {
        let d = ToolDescriptor::mock("q", ToolKind::EvalTool, TaskSlot::Any, SourceSlot::Any)
            .with_param("native_min", 1)
            .with_param("native_max", 5);
        assert_eq!(d.rescale(1.0).unwrap().value(), 0.0);
        assert_eq!(d.rescale(3.0).unwrap().value(), 50.0);
        assert_eq!(d.rescale(5.0).unwrap().value(), 100.0);
        assert!(matches!(d.rescale(5.5), Err(Error::ToolFailure { .. })));
    }

    #[test]
    fn descriptor_validation() {
        let ok = ToolDescriptor::mock("g", ToolKind::GenTool, TaskSlot::Task(TaskKind::T2I), SourceSlot::Any);
        assert!(ok.validate().is_ok());
        let mut zero = ok.clone();
        zero.timeout_ms = 0;
        assert!(matches!(zero.validate(), Err(Error::InvalidDescriptor(_))));
        let mut bad_url = ok.clone();
        bad_url.endpoint = "ftp://x".into();
        assert!(bad_url.validate().is_err());
        let mut eval = ToolDescriptor::mock("e", ToolKind::EvalTool, TaskSlot::Any, SourceSlot::Any);
        eval.params.clear();
        assert!(eval.validate().is_err());
        let scripted = ok.with_param("script", "60, x");
        assert!(scripted.validate().is_err());
    }
}

/// Operation names understood by MLLM tools (sent as the `operation` param).
pub mod ops {
    pub const LEARN_PREFERENCE: &str = "learn_preference";
    pub const JUDGE: &str = "judge";
    pub const REVISE: &str = "revise";
    pub const CLASSIFY_TASK: &str = "classify_task";
}

/// Per-record memory summary sent to the preference learner, JSON-encoded
/// in the `memory_digest` prompt field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryDigestEntry {
    pub record_id: String,
    pub task: TaskKind,
    pub vqa_score: Score,
    pub user_score: Option<Score>,
    pub prompt_used: String,
    pub content_hash: String,
    pub uri: String,
}
