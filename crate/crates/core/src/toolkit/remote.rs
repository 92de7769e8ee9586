use std::time::{Duration, Instant};

use super::{CallError, RawToolResponse, ToolAdapter, ToolDescriptor, ToolRequest};

const DEFAULT_CONTENT_TYPE: &str = "application/json";

/// HTTP adapter: POSTs the request encoding, decodes the response encoding.
/// Each attempt is bounded by the descriptor's `timeout_ms`.
pub struct RemoteAdapter {
    agent: ureq::Agent,
}

impl RemoteAdapter {
    pub fn new(descriptor: &ToolDescriptor) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(descriptor.timeout_ms)))
            .http_status_as_error(false)
            .build();
        RemoteAdapter {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

fn classify(err: ureq::Error) -> CallError {
    match err {
        ureq::Error::Timeout(t) => CallError::transient(format!("timed out ({t})")),
        ureq::Error::Io(e) => CallError::transient(format!("i/o error: {e}")),
        ureq::Error::ConnectionFailed => CallError::transient("connection failed"),
        ureq::Error::HostNotFound => CallError::transient("host not found"),
        other => CallError::fatal(other.to_string()),
    }
}

impl ToolAdapter for RemoteAdapter {
    fn call(&self, descriptor: &ToolDescriptor, request: &ToolRequest) -> Result<RawToolResponse, CallError> {
        let body = serde_json::to_vec(request).map_err(|e| CallError::fatal(e.to_string()))?;
        let content_type = descriptor
            .params
            .get("content_type")
            .map(String::as_str)
            .unwrap_or(DEFAULT_CONTENT_TYPE);
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&descriptor.endpoint)
            .content_type(content_type)
            .send(&body[..])
            .map_err(classify)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(classify)?;
        if status >= 500 {
            return Err(CallError::transient(format!("HTTP {status}: {}", text.trim())));
        }
        if status >= 400 {
            return Err(CallError::fatal(format!("HTTP {status}: {}", text.trim())));
        }
        let mut decoded: RawToolResponse =
            serde_json::from_str(&text).map_err(|e| CallError::fatal(format!("undecodable response: {e}")))?;
        if decoded.latency_ms == 0 {
            decoded.latency_ms = started.elapsed().as_millis() as u64;
        }
        Ok(decoded)
    }
}
