//! Deterministic in-process tool backends.
//!
//! A [`HashMock`] answers as a pure function of `(tool_id, seed, request)`.
//! A [`ScriptMock`] behaves the same except that its primary score (the VQA
//! score for evaluators, the final score for MLLM judges) is read from a
//! fixed per-session sequence.

use std::collections::HashMap;

use parking_lot::Mutex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    ops, CallError, MemoryDigestEntry, RawToolResponse, ToolAdapter, ToolDescriptor, ToolKind, ToolRequest,
    OPERATION_PARAM, SESSION_PARAM,
};
use crate::domain::{MediaKind, MediaRef, TaskKind};
use crate::error::{Error, Result};

/// Aspects a mock judge may flag; the mock reviser addresses the first one
/// it finds in the reasoning text.
pub const DEFICIENCY_TERMS: [&str; 10] = [
    "lighting",
    "color",
    "composition",
    "detail",
    "style",
    "motion",
    "texture",
    "contrast",
    "framing",
    "sharpness",
];

pub const NEUTRAL_PREFERENCE: &str = "no stated preference";

const DEFAULT_VQA_WEIGHT: f64 = 0.6;
const DEFAULT_MATCH_WEIGHT: f64 = 0.4;
const MAX_KEYWORDS: usize = 8;
const TOP_RECORDS: usize = 3;
const STOPWORDS: [&str; 14] = [
    "the", "and", "with", "for", "from", "into", "that", "this", "style", "rev", "address", "prefers", "very",
    "some",
];

#[derive(Serialize)]
struct HashedRequest<'a> {
    kind: ToolKind,
    task: TaskKind,
    prompts: &'a std::collections::BTreeMap<String, String>,
    media: &'a std::collections::BTreeMap<String, MediaRef>,
    params: Vec<(&'a String, &'a String)>,
}

/// SHA-256 over the canonical JSON encoding of the request, excluding the
/// seed and the session id.
pub fn request_hash(request: &ToolRequest) -> [u8; 32] {
    let hashed = HashedRequest {
        kind: request.kind,
        task: request.task,
        prompts: &request.prompts,
        media: &request.media,
        params: request.params.iter().filter(|(k, _)| k.as_str() != SESSION_PARAM).collect(),
    };
    let bytes = serde_json::to_vec(&hashed).expect("request encodes");
    Sha256::digest(bytes).into()
}

fn mock_digest(tool_id: &str, seed: u64, req_hash: &[u8; 32], salt: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tool_id.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    h.update(req_hash);
    h.update(salt.as_bytes());
    h.finalize().into()
}

/// Uniform value in [0, 1) taken from the top 53 bits of a digest.
fn unit(digest: &[u8; 32]) -> f64 {
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn parse_script(raw: &str) -> std::result::Result<Vec<f64>, String> {
    let body = raw.split_once(':').map(|(_, rest)| rest).unwrap_or(raw);
    body.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("script entry {:?} is not a number", tok.trim()))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("script is empty".into()) } else { Ok(v) })
}

fn weights(descriptor: &ToolDescriptor) -> std::result::Result<(f64, f64), CallError> {
    let get = |key: &str, default: f64| {
        descriptor
            .param_f64(key)
            .map(|v| v.unwrap_or(default))
            .map_err(|e| CallError::fatal(e.to_string()))
    };
    Ok((get("vqa_weight", DEFAULT_VQA_WEIGHT)?, get("match_weight", DEFAULT_MATCH_WEIGHT)?))
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Keywords of the best-rated records' prompts, in prompt order.
pub fn preference_template(entries: &[MemoryDigestEntry]) -> String {
    if entries.is_empty() {
        return NEUTRAL_PREFERENCE.to_string();
    }
    let mut ranked: Vec<(usize, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.user_score.unwrap_or(e.vqa_score).value()))
        .collect();
    // Highest score first; earliest record on ties.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut keywords: Vec<String> = Vec::new();
    for (i, _) in ranked.iter().take(TOP_RECORDS) {
        for tok in tokens(&entries[*i].prompt_used) {
            if keywords.len() == MAX_KEYWORDS {
                break;
            }
            if tok.len() < 3 || STOPWORDS.contains(&tok.as_str()) || tok.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            if !keywords.contains(&tok) {
                keywords.push(tok);
            }
        }
    }
    if keywords.is_empty() {
        let mean = ranked.iter().map(|(_, s)| s).sum::<f64>() / ranked.len() as f64;
        format!("prefers results resembling its top-rated samples (mean preference {mean:.1})")
    } else {
        format!("prefers {}", keywords.join(" "))
    }
}

/// First known deficiency term mentioned in `reasoning`.
pub fn first_deficiency(reasoning: &str) -> String {
    tokens(reasoning)
        .find(|t| DEFICIENCY_TERMS.contains(&t.as_str()))
        .unwrap_or_else(|| "overall quality".to_string())
}

const VIDEO_WORDS: [&str; 8] = ["video", "clip", "animate", "animation", "footage", "movie", "film", "motion"];

fn classify(prompt: &str, media: Option<MediaKind>) -> TaskKind {
    let wants_video = tokens(prompt).any(|t| VIDEO_WORDS.contains(&t.as_str()));
    match (media, wants_video) {
        (None, false) => TaskKind::T2I,
        (None, true) => TaskKind::T2V,
        (Some(MediaKind::Image), false) => TaskKind::I2I,
        (Some(MediaKind::Image), true) => TaskKind::I2V,
        (Some(MediaKind::Video), _) => TaskKind::V2V,
    }
}

fn prompt<'a>(request: &'a ToolRequest, name: &str) -> std::result::Result<&'a str, CallError> {
    request
        .prompts
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| CallError::fatal(format!("missing prompt field {name:?}")))
}

fn respond(
    descriptor: &ToolDescriptor,
    request: &ToolRequest,
    scripted: Option<f64>,
) -> std::result::Result<RawToolResponse, CallError> {
    let req_hash = request_hash(request);
    let digest = |salt: &str| mock_digest(&descriptor.tool_id, request.seed, &req_hash, salt);
    let mut out = RawToolResponse::default();

    match request.kind {
        ToolKind::PromptTool => {
            let task_prompt = prompt(request, "task_prompt")?;
            let preference = request.prompts.get("preference_prompt").map(|s| s.trim()).unwrap_or("");
            let text = if preference.is_empty() || preference == NEUTRAL_PREFERENCE {
                task_prompt.to_string()
            } else {
                format!("{task_prompt}. Style: {preference}")
            };
            out.text_output = Some(text);
        }
        ToolKind::GenTool => {
            let kind = request.task.output_media_kind();
            let hash = hex::encode(digest("media"));
            let ext = match kind {
                MediaKind::Image => "png",
                MediaKind::Video => "mp4",
            };
            let uri = format!("mock://{}/{}.{ext}", descriptor.tool_id, &hash[..16]);
            out.media_output = Some(MediaRef::new(kind, uri, hash).map_err(|e| CallError::fatal(e.to_string()))?);
        }
        ToolKind::EvalTool => {
            let (lo, hi) = descriptor
                .native_range()
                .map_err(|e| CallError::fatal(e.to_string()))?
                .unwrap_or((0.0, 100.0));
            let native = scripted.unwrap_or_else(|| lo + unit(&digest("vqa")) * (hi - lo));
            out.scores.insert("vqa".into(), native);
        }
        ToolKind::MllmTool => {
            let op = request
                .params
                .get(OPERATION_PARAM)
                .ok_or_else(|| CallError::fatal("MLLM request has no operation"))?;
            match op.as_str() {
                ops::LEARN_PREFERENCE => {
                    let raw = request.prompts.get("memory_digest").map(String::as_str).unwrap_or("[]");
                    let entries: Vec<MemoryDigestEntry> = serde_json::from_str(raw)
                        .map_err(|e| CallError::fatal(format!("bad memory digest: {e}")))?;
                    out.text_output = Some(preference_template(&entries));
                }
                ops::JUDGE => {
                    let v: f64 = request
                        .params
                        .get("vqa_score")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| CallError::fatal("judge request has no vqa_score"))?;
                    let (final_score, matched) = match scripted {
                        Some(f) => (f, f),
                        None => {
                            let (wv, wm) = weights(descriptor)?;
                            let matched = unit(&digest("match")) * 100.0;
                            ((wv * v + wm * matched).clamp(0.0, 100.0), matched)
                        }
                    };
                    let idx = (unit(&digest("aspect")) * DEFICIENCY_TERMS.len() as f64) as usize;
                    let aspect = DEFICIENCY_TERMS[idx.min(DEFICIENCY_TERMS.len() - 1)];
                    out.text_output = Some(format!(
                        "vqa score {v:.2}, preference match {matched:.2}, final score {final_score:.2}; weakest aspect: {aspect}"
                    ));
                    out.scores.insert("final".into(), final_score);
                    out.scores.insert("match".into(), matched);
                }
                ops::REVISE => {
                    let previous = prompt(request, "previous_prompt")?;
                    let reasoning = prompt(request, "reasoning")?;
                    let k: u32 = request.params.get("revision").and_then(|s| s.parse().ok()).unwrap_or(1);
                    out.text_output = Some(format!("{previous} (rev {k}: address {})", first_deficiency(reasoning)));
                }
                ops::CLASSIFY_TASK => {
                    let user_prompt = prompt(request, "user_prompt")?;
                    let media = match request.params.get("input_media").map(String::as_str) {
                        Some("image") => Some(MediaKind::Image),
                        Some("video") => Some(MediaKind::Video),
                        _ => None,
                    };
                    out.text_output = Some(classify(user_prompt, media).to_string());
                }
                other => return Err(CallError::fatal(format!("unknown MLLM operation {other:?}"))),
            }
        }
    }
    Ok(out)
}

/// Pure-function mock.
#[derive(Debug, Default, Clone, Copy)]
pub struct HashMock;

impl ToolAdapter for HashMock {
    fn call(&self, descriptor: &ToolDescriptor, request: &ToolRequest) -> std::result::Result<RawToolResponse, CallError> {
        respond(descriptor, request, None)
    }
}

/// Mock whose primary score follows a fixed script, one cursor per session.
#[derive(Debug)]
pub struct ScriptMock {
    script: Vec<f64>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ScriptMock {
    pub fn new(script: Vec<f64>) -> Self {
        ScriptMock {
            script,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// Reads the `script` param, e.g. `"scores: 60,70,80"`.
    pub fn from_descriptor(descriptor: &ToolDescriptor) -> Result<Self> {
        let raw = descriptor
            .params
            .get("script")
            .ok_or_else(|| Error::InvalidDescriptor(format!("{}: no script param", descriptor.tool_id)))?;
        let script = parse_script(raw).map_err(|e| Error::InvalidDescriptor(format!("{}: {e}", descriptor.tool_id)))?;
        Ok(ScriptMock::new(script))
    }

    fn scripted_kind(request: &ToolRequest) -> bool {
        match request.kind {
            ToolKind::EvalTool => true,
            ToolKind::MllmTool => request.params.get(OPERATION_PARAM).map(String::as_str) == Some(ops::JUDGE),
            _ => false,
        }
    }
}

impl ToolAdapter for ScriptMock {
    fn call(&self, descriptor: &ToolDescriptor, request: &ToolRequest) -> std::result::Result<RawToolResponse, CallError> {
        if !Self::scripted_kind(request) {
            return respond(descriptor, request, None);
        }
        let session = request.params.get(SESSION_PARAM).cloned().unwrap_or_default();
        let value = {
            let mut cursors = self.cursors.lock();
            let cursor = cursors.entry(session.clone()).or_insert(0);
            let value = self.script.get(*cursor).copied();
            if value.is_some() {
                *cursor += 1;
            }
            value
        };
        let value = value.ok_or_else(|| {
            CallError::fatal(format!(
                "script of {} value(s) exhausted for session {session:?}",
                self.script.len()
            ))
        })?;
        respond(descriptor, request, Some(value))
    }
}
