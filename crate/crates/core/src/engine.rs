//! Session-level orchestration shared by the HTTP service and the CLI.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::domain::{
    now_utc, utc_seconds, MediaKind, MediaRef, PreferenceProfile, RegulatorConfig, ResultBundle, Score, SourceChoice,
    TaskKind,
};
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::memory::{FeedbackEvent, MemoryStore};
use crate::planner::{compute_threshold, BootstrapSample, GenerationRequest, Planner};
use crate::toolkit::ToolRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub regulator: RegulatorConfig,
    pub registry_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    #[serde(with = "utc_seconds")]
    pub created_at: DateTime<Utc>,
    pub config: SessionConfig,
}

/// What the user sees after a generation: the result, the threshold it was
/// held to, and the profile as it stands afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub result: ResultBundle,
    pub profile_after: PreferenceProfile,
    pub threshold_used: Score,
    pub notes: String,
}

pub fn summarize(result: ResultBundle, profile_after: PreferenceProfile, threshold_used: Score) -> Summary {
    let budget_note = |n: u32| if n == 1 { "iteration".to_string() } else { "iterations".to_string() };
    let notes = if result.threshold_met {
        format!(
            "threshold met after {} {}: final score {} >= threshold {}",
            result.iterations_used,
            budget_note(result.iterations_used),
            result.final_score,
            threshold_used
        )
    } else {
        let best = result.trace.best().map(|i| i + 1).unwrap_or(result.iterations_used as usize);
        format!(
            "threshold {} not met within {} {}; returned best-of selection from iteration {} with final score {}",
            threshold_used,
            result.iterations_used,
            budget_note(result.iterations_used),
            best,
            result.final_score
        )
    };
    Summary {
        result,
        profile_after,
        threshold_used,
        notes,
    }
}

/// A generation request as it arrives from a client: media by locator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateInput {
    pub prompt: String,
    #[serde(default)]
    pub media_uri: Option<String>,
    #[serde(default)]
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub source: SourceChoice,
    #[serde(default)]
    pub seed: u64,
}

/// A bootstrap sample as it arrives from a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInput {
    pub media_uri: String,
    pub score: f64,
    #[serde(default)]
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub user_id: String,
    pub task: TaskKind,
    pub record_count: usize,
    pub record_ids: Vec<String>,
    pub threshold: Score,
}

pub struct Engine {
    planner: Planner,
    tools: Arc<ToolRegistry>,
    memory: Arc<MemoryStore>,
    sessions: RwLock<HashMap<String, Session>>,
}

impl Engine {
    pub fn new(planner: Planner, tools: Arc<ToolRegistry>, memory: Arc<MemoryStore>) -> Result<Self> {
        planner.config.validate()?;
        Ok(Engine {
            planner,
            tools,
            memory,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn tools(&self) -> &ToolRegistry {
        &self.tools
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn create_session(&self, user_id: &str) -> Result<Session> {
        if user_id.trim().is_empty() {
            return Err(Error::Invalid("user_id is empty".into()));
        }
        let session = Session {
            session_id: format!("ses-{:016x}", rand::random::<u64>()),
            user_id: user_id.to_string(),
            created_at: now_utc(),
            config: SessionConfig {
                regulator: self.planner.config,
                registry_version: self.tools.version(),
            },
        };
        self.sessions.write().insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<Session> {
        self.sessions
            .read()
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))
    }

    fn planner_for(&self, session: Option<&Session>) -> Planner {
        let mut planner = self.planner.clone();
        if let Some(s) = session {
            planner.config = s.config.regulator;
        }
        planner
    }

    pub fn bootstrap(
        &self,
        user_id: &str,
        task: TaskKind,
        samples: &[SampleInput],
        session: Option<&Session>,
    ) -> Result<BootstrapOutcome> {
        let kind = task.output_media_kind();
        let samples = samples
            .iter()
            .map(|s| {
                Ok(BootstrapSample {
                    media: MediaRef::from_uri(&s.media_uri, Some(kind))?,
                    user_score: Score::new(s.score)?,
                    prompt: s.prompt.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let planner = self.planner_for(session);
        let records = planner.bootstrap_preferences(&self.tools, &self.memory, user_id, task, &samples)?;
        let snapshot = self.memory.snapshot(user_id);
        Ok(BootstrapOutcome {
            user_id: user_id.to_string(),
            task,
            record_count: records.len(),
            record_ids: records.into_iter().map(|r| r.record_id).collect(),
            threshold: compute_threshold(&snapshot, task, &planner.config),
        })
    }

    /// Plans, runs the loop and summarizes.
    pub fn generate(&self, user_id: &str, input: &GenerateInput, session: Option<&Session>) -> Result<Summary> {
        let input_media = input
            .media_uri
            .as_deref()
            .filter(|u| !u.trim().is_empty())
            .map(|u| MediaRef::from_uri(u, Some(MediaKind::from_extension(u))))
            .transpose()?;
        let request = GenerationRequest {
            user_id: user_id.to_string(),
            user_prompt: input.prompt.clone(),
            input_media,
            source_choice: input.source,
            explicit_task: input.task,
            seed: input.seed,
        };
        let planner = self.planner_for(session);
        let before = self.memory.snapshot(user_id);
        let plan = planner.build_plan(&request, &self.tools, &before)?;

        let mut executor = Executor::new(&self.tools, &self.memory);
        if let Some(s) = session {
            executor = executor.with_session(s.session_id.clone());
        }
        let result = executor.run_loop(&plan, &request).map_err(|failure| {
            log::warn!("generation for {user_id} aborted: {failure}");
            failure.error
        })?;
        let profile = self.profile_with(&planner, user_id, plan.task)?;
        Ok(summarize(result, profile, plan.threshold))
    }

    /// Records the user's score for a generated result and returns the
    /// refreshed profile for that task.
    pub fn feedback(&self, result_id: &str, score: f64) -> Result<PreferenceProfile> {
        let score = Score::new(score)?;
        let record = self
            .memory
            .get(result_id)
            .ok_or_else(|| Error::UnknownResult(result_id.to_string()))?;
        let updated = self.memory.apply_feedback(FeedbackEvent {
            result_id: result_id.to_string(),
            user_id: record.user_id.clone(),
            task: record.task,
            score,
            created_at: now_utc(),
        })?;
        self.profile(&updated.user_id, updated.task)
    }

    /// Profile derived on read from the memory log.
    pub fn profile(&self, user_id: &str, task: TaskKind) -> Result<PreferenceProfile> {
        self.profile_with(&self.planner, user_id, task)
    }

    fn profile_with(&self, planner: &Planner, user_id: &str, task: TaskKind) -> Result<PreferenceProfile> {
        let records = self.memory.snapshot(user_id);
        let preference_prompt = Executor::new(&self.tools, &self.memory).learn_preference(&records, task, 0)?;
        Ok(PreferenceProfile {
            user_id: user_id.to_string(),
            task,
            preference_prompt,
            threshold: compute_threshold(&records, task, &planner.config),
            intra_record_count: records.iter().filter(|r| r.task == task).count(),
            total_record_count: records.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> Engine {
        Engine::new(
            Planner::default(),
            Arc::new(ToolRegistry::with_defaults()),
            Arc::new(MemoryStore::in_memory()),
        )
        .unwrap()
    }

    fn samples() -> Vec<SampleInput> {
        [(90.0, "bright vivid meadow"), (70.0, "grey street"), (80.0, "warm sunset")]
            .iter()
            .enumerate()
            .map(|(i, (s, p))| SampleInput {
                media_uri: format!("fixtures/sample{i}.png"),
                score: *s,
                prompt: p.to_string(),
            })
            .collect()
    }

    #[test]
    fn session_script_tracks_threshold() {
        let engine = engine();
        let session = engine.create_session("alice").unwrap();
        assert_eq!(engine.session(&session.session_id).unwrap(), session);

        let boot = engine.bootstrap("alice", TaskKind::T2I, &samples(), Some(&session)).unwrap();
        assert_eq!(boot.record_count, 3);

        let input = GenerateInput {
            prompt: "draw a fox".into(),
            seed: 7,
            ..Default::default()
        };
        let summary = engine.generate("alice", &input, Some(&session)).unwrap();
        assert!(summary.profile_after.preference_prompt.contains("bright vivid meadow"));
        assert_eq!(summary.threshold_used, boot.threshold);
        assert_eq!(summary.profile_after.total_record_count, 4);
        let records = engine.memory().snapshot("alice");
        assert_eq!(
            summary.profile_after.threshold,
            compute_threshold(&records, TaskKind::T2I, &RegulatorConfig::default())
        );

        let profile = engine.feedback(&summary.result.result_id, 85.0).unwrap();
        let records = engine.memory().snapshot("alice");
        assert_eq!(profile.threshold, compute_threshold(&records, TaskKind::T2I, &RegulatorConfig::default()));
        assert_eq!(
            engine.feedback(&summary.result.result_id, 85.0),
            Err(Error::AlreadyScored(summary.result.result_id.clone()))
        );
        assert!(matches!(engine.feedback("res-nope", 50.0), Err(Error::UnknownResult(_))));
        assert!(matches!(engine.feedback(&summary.result.result_id, 105.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn generate_validation() {
        let engine = engine();
        let input = GenerateInput {
            prompt: "edit".into(),
            task: Some(TaskKind::V2V),
            ..Default::default()
        };
        assert!(matches!(engine.generate("u", &input, None), Err(Error::MediaMismatch { .. })));
        assert!(matches!(engine.session("ses-x"), Err(Error::UnknownSession(_))));
    }

    #[test]
    fn summary_notes() {
        let engine = engine();
        let input = GenerateInput {
            prompt: "draw a fox".into(),
            seed: 3,
            ..Default::default()
        };
        let summary = engine.generate("bob", &input, None).unwrap();
        if summary.result.threshold_met {
            assert!(summary.notes.contains("threshold met"));
        } else {
            assert!(summary.notes.contains("best-of"));
        }
        let mut forced = summary.result.clone();
        forced.threshold_met = false;
        assert!(summarize(forced, summary.profile_after.clone(), summary.threshold_used)
            .notes
            .contains("best-of selection"));
    }
}
