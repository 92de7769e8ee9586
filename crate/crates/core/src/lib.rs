//! Preference-aware content generation loop.
//!
//! A [`planner::Planner`] turns a user request into a [`domain::Plan`] with an
//! adaptive pass threshold computed from the user's preference memory. The
//! [`executor::Executor`] runs the generate/evaluate/revise loop through tools
//! resolved from a [`toolkit::ToolRegistry`], and every outcome lands in the
//! append-only [`memory::MemoryStore`]. [`engine::Engine`] ties these together
//! behind the operations exposed by the HTTP service and CLI.

pub mod domain;
pub mod engine;
pub mod error;
pub mod executor;
pub mod memory;
pub mod planner;
pub mod toolkit;

pub use domain::{
    requires_input_media, validate_score, MediaKind, MediaRef, MemoryRecord, Origin, Plan, PreferenceProfile,
    RegulatorConfig, ResultBundle, Score, SourceChoice, TaskKind,
};
pub use error::{Error, ErrorClass, Result};
