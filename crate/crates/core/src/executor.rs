//! The closed generation loop: learn a preference prompt from memory,
//! rewrite the task prompt, then generate, evaluate and revise until the
//! final score reaches the plan's threshold or the budget runs out.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{now_utc, MediaRef, MemoryRecord, Origin, Plan, ResultBundle, Score, SourceChoice, TaskKind};
use crate::error::{Error, EvalStage, Result};
use crate::memory::MemoryStore;
use crate::planner::{with_stage, GenerationRequest};
use crate::toolkit::{
    ops, MemoryDigestEntry, ToolDescriptor, ToolKind, ToolRegistry, ToolRequest, ToolResponse, OPERATION_PARAM,
};

pub use crate::toolkit::mock::NEUTRAL_PREFERENCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopIteration {
    pub prompt_used: String,
    pub output: MediaRef,
    pub vqa_score: Score,
    pub final_score: Score,
    pub reasoning: String,
    pub below_threshold: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub iterations: Vec<LoopIteration>,
}

impl LoopTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Index of the highest final score; the earliest wins ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, it) in self.iterations.iter().enumerate() {
            if best.is_none_or(|b| it.final_score > self.iterations[b].final_score) {
                best = Some(i);
            }
        }
        best
    }
}

/// A loop that stopped on an error, with the iterations completed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopFailure {
    pub error: Error,
    pub trace: LoopTrace,
}

impl fmt::Display for LoopFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} iteration(s))", self.error, self.trace.len())
    }
}

impl std::error::Error for LoopFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<LoopFailure> for Error {
    fn from(f: LoopFailure) -> Self {
        f.error
    }
}

/// Output of the quality evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub vqa_score: Score,
    pub final_score: Score,
    pub reasoning: String,
}

/// Runs executor steps against a tool registry and memory store. Requests
/// carry `session_id` so script mocks keep per-session cursors.
pub struct Executor<'a> {
    tools: &'a ToolRegistry,
    memory: &'a MemoryStore,
    session_id: Option<String>,
}

fn text_of(descriptor: &ToolDescriptor, response: ToolResponse) -> Result<String> {
    response
        .text_output
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| Error::ToolFailure {
            tool_id: descriptor.tool_id.clone(),
            stage: None,
            attempts: 1,
            cause: "response has no text output".into(),
        })
}

impl<'a> Executor<'a> {
    pub fn new(tools: &'a ToolRegistry, memory: &'a MemoryStore) -> Self {
        Executor {
            tools,
            memory,
            session_id: None,
        }
    }

    pub fn with_session(mut self, session_id: impl Into<String>) -> Self {
        self.session_id = Some(session_id.into());
        self
    }

    fn request(&self, kind: ToolKind, task: TaskKind, seed: u64) -> ToolRequest {
        ToolRequest::new(kind, task, seed).session(self.session_id.as_deref())
    }

    /// Summarizes memory into a preference prompt. Empty memory yields the
    /// neutral prompt without calling any tool.
    pub fn learn_preference(&self, records: &[MemoryRecord], task: TaskKind, seed: u64) -> Result<String> {
        if records.is_empty() {
            return Ok(NEUTRAL_PREFERENCE.to_string());
        }
        let digest: Vec<MemoryDigestEntry> = records
            .iter()
            .map(|r| MemoryDigestEntry {
                record_id: r.record_id.clone(),
                task: r.task,
                vqa_score: r.vqa_score,
                user_score: r.user_score,
                prompt_used: r.prompt_used.clone(),
                content_hash: r.sample.content_hash.clone(),
                uri: r.sample.uri.clone(),
            })
            .collect();
        let descriptor = self.tools.resolve_any_source(ToolKind::MllmTool, task)?;
        let request = self
            .request(ToolKind::MllmTool, task, seed)
            .param(OPERATION_PARAM, ops::LEARN_PREFERENCE)
            .prompt("memory_digest", serde_json::to_string(&digest).expect("digest encodes"));
        let response = self.tools.invoke(&descriptor, &request)?;
        text_of(&descriptor, response)
    }

    /// Folds the preference prompt into the task prompt with the task's
    /// prompt tool. The neutral preference passes the task prompt through.
    pub fn rewrite_prompt(&self, task_prompt: &str, preference_prompt: &str, task: TaskKind, seed: u64) -> Result<String> {
        if task_prompt.trim().is_empty() {
            return Err(Error::Precondition("task prompt is empty".into()));
        }
        if preference_prompt.trim().is_empty() || preference_prompt.trim() == NEUTRAL_PREFERENCE {
            return Ok(task_prompt.to_string());
        }
        let descriptor = self.tools.resolve_any_source(ToolKind::PromptTool, task)?;
        let request = self
            .request(ToolKind::PromptTool, task, seed)
            .prompt("task_prompt", task_prompt)
            .prompt("preference_prompt", preference_prompt);
        let response = self.tools.invoke(&descriptor, &request)?;
        text_of(&descriptor, response)
    }

    pub fn generate_content(
        &self,
        prompt: &str,
        task: TaskKind,
        source: SourceChoice,
        input_media: Option<&MediaRef>,
        seed: u64,
    ) -> Result<MediaRef> {
        task.check_input_media(input_media)?;
        let descriptor = self.tools.resolve_tool(ToolKind::GenTool, task, source)?;
        let mut request = self.request(ToolKind::GenTool, task, seed).prompt("prompt", prompt);
        if let Some(media) = input_media {
            request = request.media("input", media.clone());
        }
        let response = self.tools.invoke(&descriptor, &request)?;
        let failure = |cause: String| Error::ToolFailure {
            tool_id: descriptor.tool_id.clone(),
            stage: None,
            attempts: 1,
            cause,
        };
        let media = response.media_output.ok_or_else(|| failure("response has no media output".into()))?;
        if media.kind != task.output_media_kind() {
            return Err(failure(format!("generated an {} for {task}", media.kind)));
        }
        Ok(media)
    }

    /// VQA score from the task's evaluator, then final score and reasoning
    /// from the MLLM judge.
    pub fn evaluate_quality(
        &self,
        input_media: Option<&MediaRef>,
        task_prompt: &str,
        output: &MediaRef,
        preference_prompt: &str,
        task: TaskKind,
        seed: u64,
    ) -> Result<Evaluation> {
        if output.kind != task.output_media_kind() {
            return Err(Error::MediaMismatch {
                task,
                reason: format!("cannot evaluate an {} output", output.kind),
            });
        }
        let stage_failure = |stage: EvalStage, tool_id: &str, cause: &str| Error::ToolFailure {
            tool_id: tool_id.to_string(),
            stage: Some(stage),
            attempts: 1,
            cause: cause.to_string(),
        };

        let evaluator = self.tools.resolve_any_source(ToolKind::EvalTool, task)?;
        let mut request = self
            .request(ToolKind::EvalTool, task, seed)
            .prompt("task_prompt", task_prompt)
            .media("output", output.clone());
        if let Some(media) = input_media {
            request = request.media("input", media.clone());
        }
        let vqa = self
            .tools
            .invoke(&evaluator, &request)
            .map_err(|e| with_stage(e, EvalStage::Vqa))?
            .score("vqa")
            .ok_or_else(|| stage_failure(EvalStage::Vqa, &evaluator.tool_id, "response has no vqa score"))?;

        let judge = self.tools.resolve_any_source(ToolKind::MllmTool, task)?;
        let request = self
            .request(ToolKind::MllmTool, task, seed)
            .param(OPERATION_PARAM, ops::JUDGE)
            .param("vqa_score", vqa.value())
            .prompt("preference_prompt", preference_prompt)
            .media("output", output.clone());
        let response = self
            .tools
            .invoke(&judge, &request)
            .map_err(|e| with_stage(e, EvalStage::Judge))?;
        let final_score = response
            .score("final")
            .ok_or_else(|| stage_failure(EvalStage::Judge, &judge.tool_id, "response has no final score"))?;
        let reasoning = response
            .text_output
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| stage_failure(EvalStage::Judge, &judge.tool_id, "response has no reasoning"))?;
        Ok(Evaluation {
            vqa_score: vqa,
            final_score,
            reasoning,
        })
    }

    /// Rewrites the last prompt to address the judge's reasoning. `revision`
    /// counts revisions within the loop, starting at 1.
    pub fn revise_prompt(
        &self,
        output: &MediaRef,
        reasoning: &str,
        previous_prompt: &str,
        task: TaskKind,
        revision: u32,
        seed: u64,
    ) -> Result<String> {
        if reasoning.trim().is_empty() {
            return Err(Error::Precondition("reasoning is empty".into()));
        }
        let descriptor = self.tools.resolve_any_source(ToolKind::MllmTool, task)?;
        let request = self
            .request(ToolKind::MllmTool, task, seed)
            .param(OPERATION_PARAM, ops::REVISE)
            .param("revision", revision)
            .prompt("previous_prompt", previous_prompt)
            .prompt("reasoning", reasoning)
            .media("output", output.clone());
        let response = self.tools.invoke(&descriptor, &request)?;
        let revised = text_of(&descriptor, response)?;
        if revised == previous_prompt {
            return Err(Error::ToolFailure {
                tool_id: descriptor.tool_id,
                stage: None,
                attempts: 1,
                cause: "reviser returned the prompt unchanged".into(),
            });
        }
        Ok(revised)
    }

    /// Runs the full loop for `plan` and stores the returned sample (with its
    /// VQA score, no user score yet) in memory.
    pub fn run_loop(&self, plan: &Plan, request: &GenerationRequest) -> std::result::Result<ResultBundle, LoopFailure> {
        let mut trace = LoopTrace::default();
        match self.run_inner(plan, request, &mut trace) {
            Ok(bundle) => Ok(bundle),
            Err(error) => Err(LoopFailure { error, trace }),
        }
    }

    fn run_inner(&self, plan: &Plan, request: &GenerationRequest, trace: &mut LoopTrace) -> Result<ResultBundle> {
        plan.validate()?;
        if plan.user_id != request.user_id {
            return Err(Error::Precondition("plan and request belong to different users".into()));
        }
        plan.task.check_input_media(request.input_media.as_ref())?;
        let input = request.input_media.as_ref();
        let base_seed = request.seed;

        let records = self.memory.snapshot(&plan.user_id);
        let preference = self.learn_preference(&records, plan.task, base_seed)?;
        let mut prompt = self.rewrite_prompt(&plan.task_prompt, &preference, plan.task, base_seed)?;
        let mut trail = Vec::new();

        for k in 0..plan.budget {
            let seed = base_seed.wrapping_add(k as u64);
            let output = self.generate_content(&prompt, plan.task, plan.source_choice, input, seed)?;
            let eval = self.evaluate_quality(input, &plan.task_prompt, &output, &preference, plan.task, seed)?;
            let passed = eval.final_score >= plan.threshold;
            trail.push(prompt.clone());
            trace.iterations.push(LoopIteration {
                prompt_used: prompt.clone(),
                output,
                vqa_score: eval.vqa_score,
                final_score: eval.final_score,
                reasoning: eval.reasoning,
                below_threshold: !passed,
            });
            if passed {
                break;
            }
            if k + 1 < plan.budget {
                let last = trace.iterations.last().expect("just pushed");
                prompt = self.revise_prompt(&last.output, &last.reasoning, &prompt, plan.task, k + 1, seed)?;
            }
        }

        let passed = trace.iterations.last().is_some_and(|it| !it.below_threshold);
        let chosen = if passed {
            trace.len() - 1
        } else {
            trace.best().expect("budget >= 1")
        };
        let pick = trace.iterations[chosen].clone();
        let result_id = self.result_id(plan, request, records.len());

        self.memory.append_record(MemoryRecord {
            record_id: result_id.clone(),
            user_id: plan.user_id.clone(),
            task: plan.task,
            sample: pick.output.clone(),
            vqa_score: pick.vqa_score,
            user_score: None,
            prompt_used: pick.prompt_used.clone(),
            origin: Origin::Generated,
            created_at: now_utc(),
        })?;

        let bundle = ResultBundle {
            result_id,
            output: pick.output,
            vqa_score: pick.vqa_score,
            final_score: pick.final_score,
            reasoning: pick.reasoning,
            iterations_used: trail.len() as u32,
            prompt_trail: trail,
            threshold_met: passed,
            trace: trace.clone(),
        };
        bundle.validate(plan)?;
        Ok(bundle)
    }

    fn result_id(&self, plan: &Plan, request: &GenerationRequest, memory_len: usize) -> String {
        let mut h = Sha256::new();
        for part in [
            plan.user_id.as_str(),
            plan.task.as_str(),
            plan.task_prompt.as_str(),
            &request.seed.to_string(),
            &memory_len.to_string(),
            self.session_id.as_deref().unwrap_or(""),
        ] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        format!("res-{}", &hex::encode(h.finalize())[..16])
    }
}
