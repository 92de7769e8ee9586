use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use parking_lot::RwLock;
use rand::Rng;

use super::mock::{HashMock, ScriptMock};
use super::remote::RemoteAdapter;
use super::{
    default_descriptors, SourceSlot, TaskSlot, ToolAdapter, ToolDescriptor, ToolKind, ToolRequest,
    ToolResponse,
};
use crate::domain::{SourceChoice, TaskKind};
use crate::error::{Error, Result};

/// First backoff window between attempts; doubles on each retry.
pub const BACKOFF_BASE_MS: u64 = 250;

/// Upper bound of the full-jitter backoff before attempt `attempt + 1`
/// (`attempt` counts from 1).
pub fn backoff_ceiling_ms(attempt: u32) -> u64 {
    BACKOFF_BASE_MS.saturating_mul(1u64 << (attempt - 1).min(20))
}

type SlotKey = (ToolKind, TaskSlot, SourceSlot);

struct RegisteredTool {
    descriptor: ToolDescriptor,
    adapter: Box<dyn ToolAdapter>,
    calls: AtomicU64,
}

#[derive(Default)]
struct Slots {
    by_slot: BTreeMap<SlotKey, Arc<RegisteredTool>>,
}

impl Slots {
    fn by_id(&self, tool_id: &str) -> Option<(&SlotKey, &Arc<RegisteredTool>)> {
        self.by_slot.iter().find(|(_, t)| t.descriptor.tool_id == tool_id)
    }
}

/// Registry of tool descriptors keyed by `(kind, task, source)`.
///
/// Read-mostly: registration takes an exclusive lock, resolution and
/// invocation only a shared one.
#[derive(Default)]
pub struct ToolRegistry {
    slots: RwLock<Slots>,
    version: AtomicU64,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry populated with the shipped mock tool table.
    pub fn with_defaults() -> Self {
        Self::from_descriptors(default_descriptors()).expect("default descriptors are valid")
    }

    pub fn from_descriptors(descriptors: impl IntoIterator<Item = ToolDescriptor>) -> Result<Self> {
        let registry = Self::new();
        for d in descriptors {
            registry.register_tool(d)?;
        }
        Ok(registry)
    }

    /// Registers a descriptor, choosing the adapter from its endpoint.
    pub fn register_tool(&self, descriptor: ToolDescriptor) -> Result<()> {
        descriptor.validate()?;
        let adapter: Box<dyn ToolAdapter> = if descriptor.is_mock() {
            if descriptor.params.contains_key("script") {
                Box::new(ScriptMock::from_descriptor(&descriptor)?)
            } else {
                Box::new(HashMock)
            }
        } else {
            Box::new(RemoteAdapter::new(&descriptor))
        };
        self.register_with_adapter(descriptor, adapter)
    }

    /// Registers a descriptor served by a caller-supplied adapter.
    pub fn register_with_adapter(&self, descriptor: ToolDescriptor, adapter: Box<dyn ToolAdapter>) -> Result<()> {
        descriptor.validate()?;
        let key = (descriptor.kind, descriptor.task, descriptor.source);
        let mut slots = self.slots.write();
        if let Some((other, _)) = slots.by_id(&descriptor.tool_id) {
            if *other != key {
                return Err(Error::InvalidDescriptor(format!(
                    "tool_id {} is already registered for {}/{}/{}",
                    descriptor.tool_id, other.0, other.1, other.2
                )));
            }
        }
        let tool = Arc::new(RegisteredTool {
            descriptor,
            adapter,
            calls: AtomicU64::new(0),
        });
        if let Some(previous) = slots.by_slot.insert(key, tool) {
            log::warn!(
                "tool slot {}/{}/{} re-registered; {} replaced",
                key.0,
                key.1,
                key.2,
                previous.descriptor.tool_id
            );
        }
        self.version.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    /// Incremented on every registration.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    pub fn descriptors(&self) -> Vec<ToolDescriptor> {
        self.slots.read().by_slot.values().map(|t| t.descriptor.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.read().by_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exact slot first, then task-wildcard on source, then task wildcard,
    /// then both wildcards.
    pub fn resolve_tool(&self, kind: ToolKind, task: TaskKind, source: SourceChoice) -> Result<ToolDescriptor> {
        let probes = [
            (kind, TaskSlot::Task(task), SourceSlot::Source(source)),
            (kind, TaskSlot::Task(task), SourceSlot::Any),
            (kind, TaskSlot::Any, SourceSlot::Source(source)),
            (kind, TaskSlot::Any, SourceSlot::Any),
        ];
        let slots = self.slots.read();
        probes
            .iter()
            .find_map(|key| slots.by_slot.get(key))
            .map(|t| t.descriptor.clone())
            .ok_or_else(|| Error::ToolNotFound {
                probes: probes.iter().map(|(k, t, s)| format!("{k}/{t}/{s}")).collect(),
            })
    }

    /// Resolution for tools that do not distinguish open/closed sources.
    pub fn resolve_any_source(&self, kind: ToolKind, task: TaskKind) -> Result<ToolDescriptor> {
        let probes = [
            (kind, TaskSlot::Task(task), SourceSlot::Any),
            (kind, TaskSlot::Task(task), SourceSlot::Source(SourceChoice::Open)),
            (kind, TaskSlot::Task(task), SourceSlot::Source(SourceChoice::Closed)),
            (kind, TaskSlot::Any, SourceSlot::Any),
            (kind, TaskSlot::Any, SourceSlot::Source(SourceChoice::Open)),
            (kind, TaskSlot::Any, SourceSlot::Source(SourceChoice::Closed)),
        ];
        let slots = self.slots.read();
        probes
            .iter()
            .find_map(|key| slots.by_slot.get(key))
            .map(|t| t.descriptor.clone())
            .ok_or_else(|| Error::ToolNotFound {
                probes: probes.iter().map(|(k, t, s)| format!("{k}/{t}/{s}")).collect(),
            })
    }

    /// Number of `invoke` calls routed to `tool_id` (each counted once,
    /// regardless of retries).
    pub fn invocation_count(&self, tool_id: &str) -> u64 {
        self.slots
            .read()
            .by_id(tool_id)
            .map(|(_, t)| t.calls.load(Ordering::SeqCst))
            .unwrap_or(0)
    }

    /// Calls the tool registered under `descriptor.tool_id`, retrying
    /// transient failures with full-jitter exponential backoff.
    pub fn invoke(&self, descriptor: &ToolDescriptor, request: &ToolRequest) -> Result<ToolResponse> {
        if request.kind != descriptor.kind {
            return Err(Error::KindMismatch {
                tool: descriptor.kind.to_string(),
                request: request.kind.to_string(),
            });
        }
        let tool = {
            let slots = self.slots.read();
            slots
                .by_id(&descriptor.tool_id)
                .map(|(_, t)| Arc::clone(t))
                .ok_or_else(|| Error::ToolNotFound {
                    probes: vec![format!("tool_id={}", descriptor.tool_id)],
                })?
        };
        tool.calls.fetch_add(1, Ordering::SeqCst);
        let descriptor = &tool.descriptor;

        let max_attempts = descriptor.max_retries + 1;
        let mut attempt = 1;
        loop {
            match tool.adapter.call(descriptor, request) {
                Ok(raw) => return finish(descriptor, raw, attempt),
                Err(err) if err.retryable && attempt < max_attempts => {
                    let ceiling = backoff_ceiling_ms(attempt);
                    let wait = rand::rng().random_range(0..=ceiling);
                    log::debug!(
                        "tool {} attempt {attempt} failed ({}); retrying in {wait} ms",
                        descriptor.tool_id,
                        err.cause
                    );
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(err) => {
                    return Err(Error::ToolFailure {
                        tool_id: descriptor.tool_id.clone(),
                        stage: None,
                        attempts: attempt,
                        cause: err.cause,
                    })
                }
            }
        }
    }
}

fn finish(descriptor: &ToolDescriptor, raw: super::RawToolResponse, attempts: u32) -> Result<ToolResponse> {
    let failure = |cause: String| Error::ToolFailure {
        tool_id: descriptor.tool_id.clone(),
        stage: None,
        attempts,
        cause,
    };
    if raw.text_output.is_none() && raw.media_output.is_none() && raw.scores.is_empty() {
        return Err(failure("empty response".into()));
    }
    let mut scores = BTreeMap::new();
    for (name, value) in raw.scores {
        let score = descriptor.rescale(value).map_err(|_| {
            failure(format!("score {name}={value} outside the declared range"))
        })?;
        scores.insert(name, score);
    }
    if let Some(media) = &raw.media_output {
        media.validate().map_err(|e| failure(e.to_string()))?;
    }
    Ok(ToolResponse {
        text_output: raw.text_output,
        media_output: raw.media_output,
        scores,
        latency_ms: raw.latency_ms,
    })
}
