use std::path::{Path, PathBuf};
use std::sync::Arc;

use prefloop_core::engine::Engine;
use prefloop_core::memory::MemoryStore;
use prefloop_core::planner::{default_task_rules, Planner, TaskAnalyzer, TaskRule, DEFAULT_BOOTSTRAP_CAP};
use prefloop_core::toolkit::{ToolDescriptor, ToolRegistry};
use prefloop_core::{RegulatorConfig, Score};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Service and CLI configuration, read from TOML. Relative paths resolve
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub beta1: f64,
    pub beta2: f64,
    pub max_iterations: u32,
    pub default_threshold: f64,
    pub memory_log_path: PathBuf,
    /// JSON array of tool descriptors. Replaces the built-in mock registry.
    pub registry_path: Option<PathBuf>,
    pub listen_addr: String,
    pub task_rules: Vec<TaskRule>,
    pub bootstrap_cap: usize,
    pub task_analysis_mllm: bool,
    /// fsync the memory log after every append.
    pub durable_writes: bool,
}

impl Default for Config {
    fn default() -> Self {
        let reg = RegulatorConfig::default();
        Config {
            beta1: reg.beta1,
            beta2: reg.beta2,
            max_iterations: reg.max_iterations,
            default_threshold: reg.default_threshold.value(),
            memory_log_path: PathBuf::from("prefloop-memory.jsonl"),
            registry_path: None,
            listen_addr: "127.0.0.1:8080".to_string(),
            task_rules: default_task_rules(),
            bootstrap_cap: DEFAULT_BOOTSTRAP_CAP,
            task_analysis_mllm: false,
            durable_writes: false,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.memory_log_path = base.join(&config.memory_log_path);
        config.registry_path = config.registry_path.map(|p| base.join(p));
        Ok(config)
    }

    pub fn regulator(&self) -> Result<RegulatorConfig, ServiceError> {
        let config = RegulatorConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            max_iterations: self.max_iterations,
            default_threshold: Score::new(self.default_threshold)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn registry(&self) -> Result<ToolRegistry, ServiceError> {
        match &self.registry_path {
            None => Ok(ToolRegistry::with_defaults()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
                let descriptors: Vec<ToolDescriptor> = serde_json::from_str(&text)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
                Ok(ToolRegistry::from_descriptors(descriptors)?)
            }
        }
    }

    pub fn build_engine(&self) -> Result<Engine, ServiceError> {
        if self.bootstrap_cap == 0 {
            return Err(ServiceError::Config("bootstrap_cap must be at least 1".into()));
        }
        let mut planner = Planner::new(
            self.regulator()?,
            TaskAnalyzer {
                rules: self.task_rules.clone(),
                use_mllm: self.task_analysis_mllm,
            },
        );
        planner.bootstrap_cap = self.bootstrap_cap;
        let memory = MemoryStore::open_with(&self.memory_log_path, self.durable_writes)?;
        Ok(Engine::new(planner, Arc::new(self.registry()?), Arc::new(memory))?)
    }
}
