//! Persona-conditioned reply simulation and behavioral auditing.
//!
//! The crate is organised along the audit pipeline:
//!
//! - [`corpus`]: tweet ingestion, thread reconstruction, eligibility, text
//!   preprocessing and marker extraction.
//! - [`stance`]: per-message stance labels, user leaning scores and classes,
//!   conditional leaning distributions.
//! - [`persona`]: Zero-Shot / Few-Shot persona specs, prompt rendering and
//!   cached, rate-limited reply generation.
//! - [`toxscore`]: toxicity scoring, toxic fractions and percentile ranks.
//! - [`metrics`]: lexical diversity curves, ideological consistency,
//!   exaggeration ratios and length-anomaly reports.
//! - [`harness`]: configuration, orchestration, the in-process mock model and
//!   synthetic corpus generator, report and manifest emission.

pub mod cache;
pub mod corpus;
pub mod harness;
pub mod hashing;
pub mod http;
pub mod metrics;
pub mod persona;
pub mod stance;
pub mod toxscore;

pub use corpus::{Corpus, RawTweet, Thread, TokenizedDoc, UserHistory};
pub use stance::{LeaningProfile, Stance};
