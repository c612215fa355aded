use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{MetricsConfig, RunConfig, Thresholds};
use super::pipeline::{run_pipeline, Stage};
use super::HarnessError;
use crate::hashing::sha256_hex;
use crate::persona::{Provider, Strategy};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    /// SHA-256 of the corpus file bytes.
    pub corpus: String,
    pub templates: String,
    pub stance_backend: String,
    pub toxicity_scorer: String,
    pub stop_words: String,
    pub entities: String,
    pub tokenizer: String,
}

/// Every inclusion and exclusion made by the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub records_seen: usize,
    pub ingested: usize,
    pub rejected: usize,
    pub dangling_parents: usize,
    pub users: usize,
    pub eligible_users: usize,
    /// History tweets the stance backend could not label.
    pub history_stance_unscored: usize,
    /// Eligible users left with too few labelled tweets.
    pub users_without_leaning: usize,
    pub candidate_pairs: usize,
    pub duplicate_pairs: usize,
    /// Pairs without enough earlier tweets for a Few-Shot sample.
    pub ineligible_pairs: usize,
    pub pairs: usize,
    pub pair_classes: BTreeMap<String, usize>,
    pub generation_requests: usize,
    pub generated: usize,
    pub failed_generations: usize,
    pub stance_unscored: usize,
    pub toxicity_unscored: usize,
    pub reference_unscored: usize,
    /// Replies above the length limit, dropped from diversity curves.
    pub length_anomalies: usize,
    /// Replies with no tokens after preprocessing.
    pub empty_documents: usize,
    /// Pairs dropped from consistency because a reply is failed or unlabelled.
    pub consistency_excluded: usize,
    pub percentile_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub provider: Provider,
    pub base_url: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
}

/// Timing and cache state; recorded but kept out of the manifest hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub wall_clock_ms: BTreeMap<String, u64>,
    pub generation_cache_hits: u64,
    pub generation_cache_misses: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub metrics: MetricsConfig,
    pub strategies: Vec<Strategy>,
    pub models: Vec<ModelSummary>,
    pub inputs: InputDigests,
    pub counts: StageCounts,
    pub stages: Vec<StageRecord>,
    pub notes: Vec<String>,
    /// SHA-256 per artifact path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
    /// Digest of every field above.
    pub manifest_hash: String,
    pub runtime: Runtime,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, HarnessError> {
        let path = run_dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| HarnessError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn incomplete_stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| !self.stages.iter().any(|r| r.stage == *s && r.complete))
            .collect()
    }

    fn compute_hash(&self) -> String {
        let mut c = self.clone();
        c.manifest_hash = String::new();
        c.runtime = Runtime::default();
        sha256_hex(serde_json::to_vec(&c).expect("manifest serializes"))
    }

    /// First artifact whose digest differs, in path order.
    pub fn first_difference(&self, other: &RunManifest) -> Option<String> {
        let keys: std::collections::BTreeSet<&String> = self.artifacts.keys().chain(other.artifacts.keys()).collect();
        for k in keys {
            if self.artifacts.get(k) != other.artifacts.get(k) {
                return Some(k.clone());
            }
        }
        if self.manifest_hash != other.manifest_hash {
            return Some(MANIFEST_FILE.to_string());
        }
        None
    }
}

fn collect_files(root: &Path, dir: &Path, skip: &[PathBuf], out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if skip.contains(&path) {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, skip, out)?;
        } else if path.strip_prefix(root).map_or(true, |p| p != Path::new(MANIFEST_FILE)) {
            out.push(path);
        }
    }
    Ok(())
}

fn artifact_digests(cfg: &RunConfig) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut files = Vec::new();
    let skip = [cfg.cache_root(), cfg.run_dir.join("verify")];
    collect_files(&cfg.run_dir, &cfg.run_dir, &skip, &mut files)?;
    let mut out = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(&cfg.run_dir).expect("inside run dir");
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.insert(key, sha256_hex(std::fs::read(&f)?));
    }
    Ok(out)
}

pub(super) fn finish(
    cfg: &RunConfig,
    inputs: InputDigests,
    counts: StageCounts,
    stages: Vec<StageRecord>,
    notes: Vec<String>,
    runtime: Runtime,
) -> Result<RunManifest, HarnessError> {
    let mut m = RunManifest {
        config_hash: cfg.config_hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        thresholds: cfg.thresholds.clone(),
        metrics: cfg.metrics.clone(),
        strategies: cfg.strategies.clone(),
        models: cfg
            .models
            .iter()
            .map(|e| ModelSummary {
                model_id: e.model_id.clone(),
                provider: e.provider,
                base_url: e.base_url.clone(),
                temperature: e.temperature,
                max_tokens: e.max_tokens,
                max_retries: e.max_retries,
            })
            .collect(),
        inputs,
        counts,
        stages,
        notes,
        artifacts: artifact_digests(cfg)?,
        manifest_hash: String::new(),
        runtime,
    };
    m.manifest_hash = m.compute_hash();
    let path = cfg.run_dir.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&m).map_err(|e| HarnessError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(&path, bytes)?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub hashes: Vec<String>,
    pub identical: bool,
    /// Artifact where a repetition first diverged from the first run.
    pub first_divergence: Option<String>,
}

/// Runs the full pipeline `repetitions` times into `<run_dir>/verify/rep-N`
/// with a shared cache and compares manifest hashes.
pub fn verify_determinism(cfg: &RunConfig, repetitions: usize) -> Result<VerifyReport, HarnessError> {
    if repetitions == 0 {
        return Err(HarnessError::Config("repetitions must be positive".into()));
    }
    let mut manifests: Vec<RunManifest> = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut c = cfg.clone();
        c.cache_dir = Some(cfg.cache_root());
        c.run_dir = cfg.run_dir.join("verify").join(format!("rep-{rep}"));
        manifests.push(run_pipeline(&c, Stage::Report)?.manifest);
    }
    let first_divergence = manifests[1..].iter().find_map(|m| manifests[0].first_difference(m));
    let hashes: Vec<String> = manifests.iter().map(|m| m.manifest_hash.clone()).collect();
    Ok(VerifyReport {
        identical: hashes.iter().all(|h| *h == hashes[0]),
        hashes,
        first_divergence,
    })
}
