//! HTTP service and command-line front ends over `prefloop_core::engine`.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod ops;

pub use error::ServiceError;
