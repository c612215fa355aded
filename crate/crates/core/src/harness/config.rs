use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corpus::{Strictness, DEFAULT_LENGTH_LIMIT, DEFAULT_MIN_HISTORY};
use crate::hashing::sha256_hex;
use crate::metrics::QuantileMethod;
use crate::persona::{LeaningSlot, ModelEndpoint, Provider, SampleSelection, Strategy, FEW_SHOT_SAMPLES};
use crate::stance::NEUTRAL_BAND;
use crate::toxscore::TOXIC_THRESHOLD;

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_workers() -> usize {
    1
}

fn default_context_depth() -> usize {
    4
}

/// Complete description of an audit run, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    /// Output directory; relative paths resolve against the config file.
    pub run_dir: PathBuf,
    /// Shared response cache; defaults to `<run_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Parallelism for generation and scoring; never changes results.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Ancestors of the parent tweet included in the rendered thread.
    #[serde(default = "default_context_depth")]
    pub context_depth: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub persona: PersonaConfig,
    #[serde(default)]
    pub stance: StanceConfig,
    #[serde(default)]
    pub toxicity: ToxicityConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub models: Vec<ModelEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// JSONL tweets.
    pub path: PathBuf,
    #[serde(default)]
    pub strictness: Strictness,
    /// Optional `term` list merged into single tokens.
    #[serde(default)]
    pub entities: Option<PathBuf>,
    #[serde(default)]
    pub stop_words: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub toxicity: f64,
    pub neutral_band: f64,
    pub min_history: usize,
    pub few_shot_n: usize,
    pub length_limit: usize,
    pub n_orderings: usize,
    pub n_boot: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            toxicity: TOXIC_THRESHOLD,
            neutral_band: NEUTRAL_BAND,
            min_history: DEFAULT_MIN_HISTORY,
            few_shot_n: FEW_SHOT_SAMPLES,
            length_limit: DEFAULT_LENGTH_LIMIT,
            n_orderings: 100,
            n_boot: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonaConfig {
    pub selection: SampleSelection,
    pub leaning_slot: LeaningSlot,
    /// Directory with `zero_shot.txt` and `few_shot.txt`; builtin when absent.
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "backend", deny_unknown_fields)]
pub enum StanceConfig {
    /// Phrase lexicon; builtin when `path` is absent.
    #[default]
    Lexicon,
    LexiconFile { path: PathBuf },
    Remote {
        url: String,
        model: String,
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default)]
        requests_per_second: f64,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "backend", deny_unknown_fields)]
pub enum ToxicityConfig {
    #[default]
    Lexical,
    LexicalFile { path: PathBuf },
    Perspective {
        #[serde(default)]
        url: Option<String>,
        key_env: String,
        #[serde(default)]
        requests_per_second: f64,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub quantile_method: QuantileMethod,
    pub alpha: f64,
    pub confidence: f64,
    pub histogram_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            quantile_method: QuantileMethod::Linear,
            alpha: 1.0,
            confidence: 0.95,
            histogram_bins: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.run_dir);
        for p in [
            self.cache_dir.as_mut(),
            self.corpus.entities.as_mut(),
            self.corpus.stop_words.as_mut(),
            self.persona.templates_dir.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let StanceConfig::LexiconFile { path } = &mut self.stance {
            fix(path);
        }
        if let ToxicityConfig::LexicalFile { path } = &mut self.toxicity {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let t = &self.thresholds;
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(0.0..=1.0).contains(&t.toxicity) {
            return bad(format!("thresholds.toxicity {} outside [0, 1]", t.toxicity));
        }
        if !(0.0..1.0).contains(&t.neutral_band) {
            return bad(format!("thresholds.neutral_band {} outside [0, 1)", t.neutral_band));
        }
        if t.few_shot_n == 0 || t.n_orderings == 0 {
            return bad("few_shot_n and n_orderings must be positive".into());
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            if !ids.insert(&m.model_id) {
                return bad(format!("duplicate model_id {}", m.model_id));
            }
            if m.provider == Provider::OpenaiCompatible && m.base_url.is_none() {
                return bad(format!("model {} needs base_url", m.model_id));
            }
            if let Some(mock) = &m.mock {
                mock.validate().map_err(|e| HarnessError::Config(format!("model {}: {e}", m.model_id)))?;
            }
        }
        Ok(())
    }

    /// Digest of everything that can change results. Worker count and
    /// output locations are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.run_dir = PathBuf::new();
        c.cache_dir = None;
        c.corpus.path = PathBuf::new();
        sha256_hex(serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.run_dir.join("cache"))
    }
}
