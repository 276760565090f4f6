//! Runs the maze benchmark against chat-completion endpoints.

use std::path::Path;

use thiserror::Error;

pub mod client;
pub mod config;
pub mod margins;
pub mod oracle;
pub mod runner;
pub mod stub;

pub use client::{CallError, CallOutcome, ChatClient};
pub use config::EndpointConfig;
pub use margins::{confidence_margin, margins_table, MarginMode, MarginRow};
pub use runner::{
    run_benchmark, score_records, write_reports, BenchOptions, BenchSummary, Layout, RecordStatus,
    RunRecord,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] mazenav_core::dataset::DatasetError),
    #[error(transparent)]
    Prompt(#[from] mazenav_core::PromptError),
    #[error("endpoint quota exhausted; rerun to resume from the checkpoint")]
    QuotaExhausted,
    #[error("endpoint unreachable ({0}); rerun to resume from the checkpoint")]
    EndpointUnreachable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
