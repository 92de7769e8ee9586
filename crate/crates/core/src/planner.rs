//! Request analysis, preference bootstrapping and the adaptive threshold.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    now_utc, MediaKind, MediaRef, MemoryRecord, Origin, Plan, RegulatorConfig, Score, SourceChoice, TaskKind,
};
use crate::error::{Error, EvalStage, Result};
use crate::memory::MemoryStore;
use crate::toolkit::{ops, ToolKind, ToolRegistry, ToolRequest, OPERATION_PARAM};

/// Number of rated samples accepted per bootstrap call unless configured.
pub const DEFAULT_BOOTSTRAP_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub user_id: String,
    pub user_prompt: String,
    #[serde(default)]
    pub input_media: Option<MediaRef>,
    pub source_choice: SourceChoice,
    #[serde(default)]
    pub explicit_task: Option<TaskKind>,
    #[serde(default)]
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(user_id: &str, prompt: &str) -> Self {
        GenerationRequest {
            user_id: user_id.into(),
            user_prompt: prompt.into(),
            input_media: None,
            source_choice: SourceChoice::Open,
            explicit_task: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_id.trim().is_empty() {
            return Err(Error::Invalid("user_id is empty".into()));
        }
        if self.user_prompt.trim().is_empty() {
            return Err(Error::Precondition("user prompt is empty".into()));
        }
        if let Some(media) = &self.input_media {
            media.validate()?;
        }
        if let Some(task) = self.explicit_task {
            task.check_input_media(self.input_media.as_ref())?;
        }
        Ok(())
    }
}

/// Media condition of a routing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaCondition {
    None,
    Image,
    Video,
    Any,
}

impl MediaCondition {
    fn matches(self, media: Option<MediaKind>) -> bool {
        matches!(
            (self, media),
            (MediaCondition::Any, _)
                | (MediaCondition::None, None)
                | (MediaCondition::Image, Some(MediaKind::Image))
                | (MediaCondition::Video, Some(MediaKind::Video))
        )
    }
}

/// Keyword routing rule. A rule fires when its media condition holds and
/// either it lists no keywords or any keyword occurs as a whole word or
/// phrase in the prompt. First firing rule wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRule {
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "any_media")]
    pub media: MediaCondition,
    pub task: TaskKind,
}

fn any_media() -> MediaCondition {
    MediaCondition::Any
}

fn normalized_words(text: &str) -> String {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    format!(" {} ", words.join(" "))
}

impl TaskRule {
    fn fires(&self, normalized_prompt: &str, media: Option<MediaKind>) -> bool {
        self.media.matches(media)
            && (self.keywords.is_empty()
                || self
                    .keywords
                    .iter()
                    .any(|k| normalized_prompt.contains(&normalized_words(k))))
    }
}

/// The shipped routing table.
pub fn default_task_rules() -> Vec<TaskRule> {
    let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let video_words = words(&["video", "clip", "animate", "animation", "footage", "movie", "film"]);
    vec![
        TaskRule { keywords: video_words.clone(), media: MediaCondition::Image, task: TaskKind::I2V },
        TaskRule { keywords: vec![], media: MediaCondition::Image, task: TaskKind::I2I },
        TaskRule { keywords: vec![], media: MediaCondition::Video, task: TaskKind::V2V },
        TaskRule { keywords: video_words, media: MediaCondition::None, task: TaskKind::T2V },
        TaskRule {
            keywords: words(&[
                "image", "picture", "photo", "photograph", "draw", "drawing", "illustration", "painting", "paint",
                "render", "poster", "portrait", "sketch",
            ]),
            media: MediaCondition::None,
            task: TaskKind::T2I,
        },
    ]
}

/// Strips routing tags such as `#t2v` or `[I2V]` from a prompt, returning
/// the last tag's task and the remaining text.
pub fn strip_routing_tags(prompt: &str) -> (Option<TaskKind>, String) {
    let mut tagged = None;
    let mut kept = Vec::new();
    for word in prompt.split_whitespace() {
        let inner = word
            .strip_prefix('#')
            .or_else(|| word.strip_prefix('[').and_then(|w| w.strip_suffix(']')));
        match inner.and_then(|w| w.parse::<TaskKind>().ok()) {
            Some(task) => tagged = Some(task),
            None => kept.push(word),
        }
    }
    match tagged {
        Some(_) => (tagged, kept.join(" ")),
        None => (None, prompt.trim().to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnalyzer {
    pub rules: Vec<TaskRule>,
    /// Ask the MLLM tool before consulting the rule table.
    pub use_mllm: bool,
}

impl Default for TaskAnalyzer {
    fn default() -> Self {
        TaskAnalyzer {
            rules: default_task_rules(),
            use_mllm: false,
        }
    }
}

impl TaskAnalyzer {
    /// Resolves `(task, task_prompt)`. Precedence: explicit override, routing
    /// tag, MLLM classification (when enabled), rule table.
    pub fn analyze(&self, request: &GenerationRequest, tools: &ToolRegistry) -> Result<(TaskKind, String)> {
        request.validate()?;
        let (tagged, task_prompt) = strip_routing_tags(&request.user_prompt);
        if task_prompt.is_empty() {
            return Err(Error::Precondition("prompt is empty after removing routing tags".into()));
        }
        let media_kind = request.input_media.as_ref().map(|m| m.kind);
        let task = match request.explicit_task.or(tagged) {
            Some(task) => task,
            None => {
                let from_mllm = if self.use_mllm {
                    self.classify_with_mllm(&task_prompt, media_kind, request.seed, tools)
                } else {
                    None
                };
                match from_mllm {
                    Some(task) => task,
                    None => {
                        let normalized = normalized_words(&task_prompt);
                        self.rules
                            .iter()
                            .find(|r| r.fires(&normalized, media_kind))
                            .map(|r| r.task)
                            .ok_or(Error::AmbiguousTask)?
                    }
                }
            }
        };
        task.check_input_media(request.input_media.as_ref())?;
        Ok((task, task_prompt))
    }

    fn classify_with_mllm(
        &self,
        prompt: &str,
        media: Option<MediaKind>,
        seed: u64,
        tools: &ToolRegistry,
    ) -> Option<TaskKind> {
        // classification is task-agnostic; T2I only selects the slot
        let descriptor = tools.resolve_any_source(ToolKind::MllmTool, TaskKind::T2I).ok()?;
        let request = ToolRequest::new(ToolKind::MllmTool, TaskKind::T2I, seed)
            .param(OPERATION_PARAM, ops::CLASSIFY_TASK)
            .param("input_media", media.map(|m| m.to_string()).unwrap_or_else(|| "none".into()))
            .prompt("user_prompt", prompt);
        match tools.invoke(&descriptor, &request) {
            Ok(resp) => resp.text_output.and_then(|t| t.trim().parse().ok()),
            Err(err) => {
                log::warn!("task classification via {} failed, using rule table: {err}", descriptor.tool_id);
                None
            }
        }
    }
}

/// Adaptive pass threshold for `task` over a user's full memory.
///
/// `beta1` times the mean VQA-minus-preference gap of the task's own records,
/// plus `beta2` times the sum of the other tasks' mean gaps, plus the mean
/// preference over every record. Records without a user score count with
/// preference equal to their VQA score; tasks with no records add nothing;
/// empty memory yields `config.default_threshold`. Clamped to 0–100.
pub fn compute_threshold(records: &[MemoryRecord], task: TaskKind, config: &RegulatorConfig) -> Score {
    if records.is_empty() {
        return config.default_threshold;
    }
    let mut gap_sum = [0.0f64; 5];
    let mut gap_n = [0usize; 5];
    let mut pref_sum = 0.0;
    for r in records {
        let slot = r.task as usize;
        let p = r.effective_preference();
        gap_sum[slot] += r.vqa_score.value() - p;
        gap_n[slot] += 1;
        pref_sum += p;
    }
    let mean_gap = |slot: usize| {
        if gap_n[slot] == 0 {
            0.0
        } else {
            gap_sum[slot] / gap_n[slot] as f64
        }
    };
    let own = task as usize;
    let intra = mean_gap(own);
    let cross: f64 = (0..5).filter(|&s| s != own).map(mean_gap).sum();
    let mean_pref = pref_sum / records.len() as f64;
    Score::clamped(config.beta1 * intra + config.beta2 * cross + mean_pref)
}

/// One user-rated sample offered during bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSample {
    pub media: MediaRef,
    pub user_score: Score,
    #[serde(default)]
    pub prompt: String,
}

fn seed_from_hash(content_hash: &str) -> u64 {
    let digest = Sha256::digest(content_hash.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planner {
    pub config: RegulatorConfig,
    pub analyzer: TaskAnalyzer,
    pub bootstrap_cap: usize,
}

impl Default for Planner {
    fn default() -> Self {
        Planner {
            config: RegulatorConfig::default(),
            analyzer: TaskAnalyzer::default(),
            bootstrap_cap: DEFAULT_BOOTSTRAP_CAP,
        }
    }
}

impl Planner {
    pub fn new(config: RegulatorConfig, analyzer: TaskAnalyzer) -> Self {
        Planner {
            config,
            analyzer,
            bootstrap_cap: DEFAULT_BOOTSTRAP_CAP,
        }
    }

    pub fn analyze_task(&self, request: &GenerationRequest, tools: &ToolRegistry) -> Result<(TaskKind, String)> {
        self.analyzer.analyze(request, tools)
    }

    /// Scores each sample with the task's VQA evaluator and stores it with the
    /// user's score. Nothing is stored unless every sample is scored.
    pub fn bootstrap_preferences(
        &self,
        tools: &ToolRegistry,
        memory: &MemoryStore,
        user_id: &str,
        task: TaskKind,
        samples: &[BootstrapSample],
    ) -> Result<Vec<MemoryRecord>> {
        if samples.is_empty() {
            return Err(Error::EmptyBootstrap);
        }
        if samples.len() > self.bootstrap_cap {
            return Err(Error::TooManySamples {
                cap: self.bootstrap_cap,
                got: samples.len(),
            });
        }
        if user_id.trim().is_empty() {
            return Err(Error::Invalid("user_id is empty".into()));
        }
        let expected = task.output_media_kind();
        for s in samples {
            s.media.validate()?;
            if s.media.kind != expected {
                return Err(Error::MediaMismatch {
                    task,
                    reason: format!("bootstrap sample {} is an {}, expected {expected}", s.media.uri, s.media.kind),
                });
            }
        }

        let evaluator = tools.resolve_any_source(ToolKind::EvalTool, task)?;
        let mut scored = Vec::with_capacity(samples.len());
        for s in samples {
            let request = ToolRequest::new(ToolKind::EvalTool, task, seed_from_hash(&s.media.content_hash))
                .prompt("task_prompt", s.prompt.clone())
                .media("output", s.media.clone());
            let response = tools.invoke(&evaluator, &request).map_err(|e| with_stage(e, EvalStage::Vqa))?;
            let v = response.score("vqa").ok_or_else(|| Error::ToolFailure {
                tool_id: evaluator.tool_id.clone(),
                stage: Some(EvalStage::Vqa),
                attempts: 1,
                cause: "response has no vqa score".into(),
            })?;
            scored.push(v);
        }

        let existing = memory.snapshot(user_id).len();
        let created_at = now_utc();
        let mut records = Vec::with_capacity(samples.len());
        for (i, (s, v)) in samples.iter().zip(scored).enumerate() {
            let mut h = Sha256::new();
            for part in [user_id, task.as_str(), &s.media.content_hash, &(existing + i).to_string()] {
                h.update(part.as_bytes());
                h.update([0u8]);
            }
            let record = MemoryRecord {
                record_id: format!("boot-{}", &hex::encode(h.finalize())[..16]),
                user_id: user_id.to_string(),
                task,
                sample: s.media.clone(),
                vqa_score: v,
                user_score: Some(s.user_score),
                prompt_used: s.prompt.clone(),
                origin: Origin::Bootstrap,
                created_at,
            };
            memory.append_record(record.clone())?;
            records.push(record);
        }
        Ok(records)
    }

    /// Analyzes the request and fixes the threshold and budget against the
    /// user's current memory.
    pub fn build_plan(&self, request: &GenerationRequest, tools: &ToolRegistry, records: &[MemoryRecord]) -> Result<Plan> {
        self.config.validate()?;
        let (task, task_prompt) = self.analyze_task(request, tools)?;
        Plan::new(
            task,
            task_prompt,
            request.user_id.clone(),
            request.source_choice,
            compute_threshold(records, task, &self.config),
            self.config.max_iterations,
        )
    }
}

pub(crate) fn with_stage(err: Error, stage: EvalStage) -> Error {
    match err {
        Error::ToolFailure {
            tool_id,
            attempts,
            cause,
            ..
        } => Error::ToolFailure {
            tool_id,
            stage: Some(stage),
            attempts,
            cause,
        },
        other => other,
    }
}
