//! Run configuration, the end-to-end pipeline, report and manifest emission,
//! determinism checks, and the simlab mock endpoint and corpus generator.

mod config;
mod manifest;
mod mock;
mod pipeline;
mod report;
pub mod simlab;

pub use config::{CorpusConfig, MetricsConfig, PersonaConfig, RunConfig, StanceConfig, Thresholds, ToxicityConfig};
pub use manifest::{verify_determinism, InputDigests, ModelSummary, RunManifest, Runtime, StageCounts, StageRecord, VerifyReport};
pub use mock::{prompt_leaning, prompt_tweets, MockBehavior, MockGenerator};
pub use pipeline::{build_generator, run_pipeline, RunOutcome, Stage};
pub use report::TABLE_KINDS;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[from] crate::corpus::IngestError),
    #[error("persona: {0}")]
    Persona(#[from] crate::persona::PersonaError),
    #[error("stance: {0}")]
    Stance(#[from] crate::stance::StanceError),
    #[error("toxicity: {0}")]
    Toxicity(#[from] crate::toxscore::ToxError),
    #[error("metrics: {0}")]
    Metric(#[from] crate::metrics::MetricError),
    #[error("writing {path}: {reason}")]
    Output { path: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
