use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::config::{RunConfig, StanceConfig, ToxicityConfig};
use super::manifest::{self, InputDigests, RunManifest, Runtime, StageCounts, StageRecord};
use super::mock::MockGenerator;
use super::report::{self, Populations};
use super::HarnessError;
use crate::cache::ContentStore;
use crate::corpus::{
    select_eligible_users, Corpus, EntityLexicon, RuleTokenizer, StopWords, Thread, Tokenizer, UserHistory,
};
use crate::hashing::{sha256_hex, FieldDigest};
use crate::http::{PostError, RetryPolicy};
use crate::metrics::PairKey;
use crate::persona::{
    build_few_shot, build_zero_shot, generate_reply, render_prompt, EchoStub, GenerationRecord, Generator,
    HttpChatGenerator, ModelEndpoint, PersonaError, PersonaSpec, PersonaVariant, Provider, Strategy, Templates,
};
use crate::stance::{LeaningProfile, LexiconStance, RemoteStance, Stance, StanceBackend, StanceError};
use crate::toxscore::{LexicalToxicity, PerspectiveScorer, ToxError, ToxicityScorer};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Simulate,
    Classify,
    Toxicity,
    Metrics,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Simulate,
        Stage::Classify,
        Stage::Toxicity,
        Stage::Metrics,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Simulate => "simulate",
            Stage::Classify => "classify",
            Stage::Toxicity => "toxicity",
            Stage::Metrics => "metrics",
            Stage::Report => "report",
        }
    }
}

/// Files a run writes besides the manifest and cache.
const ARTIFACTS: [&str; 7] = [
    "generations.jsonl",
    "leaning.jsonl",
    "stance.jsonl",
    "toxicity.jsonl",
    "metrics.json",
    "tables",
    super::manifest::MANIFEST_FILE,
];

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub generator_calls: u64,
}

/// A (user, parent) reply slot with everything needed to prompt for it.
pub(super) struct Pair {
    pub key: PairKey,
    pub profile: LeaningProfile,
    pub thread: Thread,
    pub few_shot: PersonaSpec,
}

/// Replies of one model under one strategy, aligned with the pair list.
pub(super) struct AgentRun {
    pub model_id: String,
    pub strategy: Strategy,
    pub records: Vec<GenerationRecord>,
    pub stance: Vec<Option<Stance>>,
    pub toxicity: Vec<Option<f64>>,
}

impl AgentRun {
    pub fn reply(&self, i: usize) -> Option<&str> {
        self.records[i].reply_text.as_deref()
    }
}

pub fn build_generator(
    endpoint: &ModelEndpoint,
    stance: &LexiconStance,
    toxicity: &LexicalToxicity,
) -> Result<Box<dyn Generator>, HarnessError> {
    Ok(match endpoint.provider {
        Provider::OpenaiCompatible => Box::new(HttpChatGenerator::new(endpoint.clone())?),
        Provider::Stub => Box::new(EchoStub::new(endpoint.clone())),
        Provider::Mock => Box::new(
            MockGenerator::new(
                endpoint.clone(),
                endpoint.mock.clone().unwrap_or_default(),
                stance.clone(),
                toxicity.clone(),
            )
            .map_err(|e| HarnessError::Config(format!("model {}: {e}", endpoint.model_id)))?,
        ),
    })
}

struct Backends {
    stance: Box<dyn StanceBackend>,
    stance_cache: Option<ContentStore>,
    toxicity: Box<dyn ToxicityScorer>,
    toxicity_cache: Option<ContentStore>,
    generators: Vec<Box<dyn Generator>>,
    generation_cache: ContentStore,
    templates: Templates,
    tokenizer: RuleTokenizer,
}

fn build_backends(cfg: &RunConfig) -> Result<Backends, HarnessError> {
    let cache_root = cfg.cache_root();
    let lexicon = match &cfg.stance {
        StanceConfig::LexiconFile { path } => LexiconStance::load(path)?,
        _ => LexiconStance::builtin(),
    };
    let table = match &cfg.toxicity {
        ToxicityConfig::LexicalFile { path } => LexicalToxicity::load(path)?,
        _ => LexicalToxicity::builtin(),
    };
    let (stance, stance_cache): (Box<dyn StanceBackend>, _) = match &cfg.stance {
        StanceConfig::Lexicon | StanceConfig::LexiconFile { .. } => (Box::new(lexicon.clone()), None),
        StanceConfig::Remote {
            url,
            model,
            token_env,
            requests_per_second,
            timeout_secs,
        } => {
            let token = match token_env {
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| HarnessError::Config(format!("environment variable {var} is not set")))?,
                ),
                None => None,
            };
            let backend = RemoteStance::new(
                url.clone(),
                model.clone(),
                token,
                Duration::from_secs_f64(*timeout_secs),
                *requests_per_second,
                RetryPolicy::default(),
            );
            (Box::new(backend), Some(ContentStore::open(cache_root.join("stance"))?))
        }
    };
    let (toxicity, toxicity_cache): (Box<dyn ToxicityScorer>, _) = match &cfg.toxicity {
        ToxicityConfig::Lexical | ToxicityConfig::LexicalFile { .. } => (Box::new(table.clone()), None),
        ToxicityConfig::Perspective {
            url,
            key_env,
            requests_per_second,
            timeout_secs,
        } => {
            let scorer = PerspectiveScorer::from_env(
                url.as_deref().unwrap_or(PerspectiveScorer::DEFAULT_URL),
                key_env,
                Duration::from_secs_f64(*timeout_secs),
                *requests_per_second,
                RetryPolicy::default(),
            )?;
            (Box::new(scorer), Some(ContentStore::open(cache_root.join("toxicity"))?))
        }
    };
    let generators = cfg
        .models
        .iter()
        .map(|m| build_generator(m, &lexicon, &table))
        .collect::<Result<Vec<_>, _>>()?;
    let templates = match &cfg.persona.templates_dir {
        Some(dir) => Templates::load(dir)?,
        None => Templates::builtin(),
    };
    let entities = match &cfg.corpus.entities {
        Some(p) => EntityLexicon::load(p)?,
        None => EntityLexicon::default_english(),
    };
    let stop_words = match &cfg.corpus.stop_words {
        Some(p) => StopWords::load(p)?,
        None => StopWords::english(),
    };
    Ok(Backends {
        stance,
        stance_cache,
        toxicity,
        toxicity_cache,
        generators,
        generation_cache: ContentStore::open(cache_root.join("generations"))?,
        templates,
        tokenizer: RuleTokenizer::new(entities, stop_words),
    })
}

fn score_key(backend: &str, text: &str) -> String {
    let mut d = FieldDigest::new("score");
    d.push_str("backend", backend).push_str("text", text);
    d.finish()
}

impl Backends {
    /// `None` when the backend gave up after retries.
    fn stance_of(&self, text: &str) -> Result<Option<Stance>, HarnessError> {
        let key = self.stance_cache.as_ref().map(|_| score_key(&self.stance.name(), text));
        if let (Some(store), Some(key)) = (&self.stance_cache, &key) {
            if let Some(s) = store.get::<Stance>(key)? {
                return Ok(Some(s));
            }
        }
        match self.stance.classify(text) {
            Ok(s) => {
                if let (Some(store), Some(key)) = (&self.stance_cache, &key) {
                    store.put(key, &s)?;
                }
                Ok(Some(s))
            }
            Err(e) if e.is_unscored() => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn toxicity_of(&self, text: &str) -> Result<Option<f64>, HarnessError> {
        let key = self.toxicity_cache.as_ref().map(|_| score_key(&self.toxicity.name(), text));
        if let (Some(store), Some(key)) = (&self.toxicity_cache, &key) {
            if let Some(v) = store.get::<f64>(key)? {
                return Ok(Some(v));
            }
        }
        match crate::toxscore::score_toxicity(text, self.toxicity.as_ref()) {
            Ok(s) => {
                if let (Some(store), Some(key)) = (&self.toxicity_cache, &key) {
                    store.put(key, &s.value)?;
                }
                Ok(Some(s.value))
            }
            Err(e) if e.is_unscored() => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

fn is_fatal_backend(e: &HarnessError) -> bool {
    matches!(
        e,
        HarnessError::Persona(PersonaError::Fatal { .. })
            | HarnessError::Stance(StanceError::Backend(PostError::Fatal(_)))
            | HarnessError::Toxicity(ToxError::Backend(PostError::Fatal(_)))
    )
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    backends: Backends,
    pool: rayon::ThreadPool,
    counts: StageCounts,
    stages: Vec<StageRecord>,
    wall: BTreeMap<String, u64>,
    notes: Vec<String>,
    corpus_digest: String,
}

impl<'a> Pipeline<'a> {
    fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn timed<R>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<R, HarnessError>) -> Result<R, HarnessError> {
        let started = Instant::now();
        let out = f(self);
        self.wall.insert(stage.name().into(), started.elapsed().as_millis() as u64);
        self.stages.push(StageRecord {
            stage,
            complete: out.is_ok(),
        });
        out
    }

    fn ingest(&mut self) -> Result<(Corpus, Vec<Pair>), HarnessError> {
        let bytes = std::fs::read(&self.cfg.corpus.path)?;
        self.corpus_digest = sha256_hex(&bytes);
        let corpus = crate::corpus::ingest_tweets(bytes.as_slice(), self.cfg.corpus.strictness)?;
        let report = corpus.report();
        self.counts.records_seen = report.records_seen;
        self.counts.ingested = report.accepted;
        self.counts.rejected = report.rejected();
        self.counts.dangling_parents = report.dangling_parents;
        self.counts.users = corpus.author_counts().len();

        let t = &self.cfg.thresholds;
        let eligible = select_eligible_users(&corpus, t.min_history);
        self.counts.eligible_users = eligible.len();

        // leaning from each eligible user's full history
        let labelled: Vec<Result<(UserHistory, Vec<Option<Stance>>), HarnessError>> = self.par_map(&eligible, |u| {
            let labels = u
                .history
                .iter()
                .map(|tw| self.backends.stance_of(&tw.text))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((u.clone(), labels))
        });
        let mut profiles: BTreeMap<String, (UserHistory, LeaningProfile)> = BTreeMap::new();
        for item in labelled {
            let (user, labels) = item?;
            let scored: Vec<Stance> = labels.iter().flatten().copied().collect();
            self.counts.history_stance_unscored += labels.len() - scored.len();
            match LeaningProfile::estimate_with(&user.user_id, &scored, t.min_history, t.neutral_band) {
                Ok(p) => {
                    profiles.insert(user.user_id.clone(), (user, p));
                }
                Err(_) => self.counts.users_without_leaning += 1,
            }
        }

        let mut pairs = Vec::new();
        let mut threads = corpus.threads(self.cfg.context_depth);
        threads.sort_by(|a, b| {
            (&a.human_reply.author_id, &a.parent.tweet_id).cmp(&(&b.human_reply.author_id, &b.parent.tweet_id))
        });
        let mut seen = std::collections::BTreeSet::new();
        for thread in threads {
            let Some((history, profile)) = profiles.get(&thread.human_reply.author_id) else {
                continue;
            };
            let key = PairKey {
                user_id: history.user_id.clone(),
                parent_id: thread.parent.tweet_id.clone(),
            };
            self.counts.candidate_pairs += 1;
            if !seen.insert(key.clone()) {
                // a second reply by the same user to the same parent
                self.counts.duplicate_pairs += 1;
                continue;
            }
            match build_few_shot(history, thread.human_reply.timestamp, t.few_shot_n, self.cfg.persona.selection) {
                Ok(few_shot) => pairs.push(Pair {
                    key,
                    profile: profile.clone(),
                    thread,
                    few_shot,
                }),
                Err(crate::persona::PersonaError::Ineligible { .. }) => self.counts.ineligible_pairs += 1,
                Err(e) => return Err(e.into()),
            }
        }
        self.counts.pairs = pairs.len();
        self.counts.pair_classes = report::class_counts(&pairs);
        info!(pairs = pairs.len(), users = profiles.len(), "ingest complete");
        Ok((corpus, pairs))
    }

    fn simulate(&mut self, pairs: &[Pair]) -> Result<Vec<AgentRun>, HarnessError> {
        let mut runs = Vec::new();
        for generator in &self.backends.generators {
            for &strategy in &self.cfg.strategies {
                let records: Vec<Result<GenerationRecord, HarnessError>> = self.par_map(pairs, |p| {
                    let spec = match strategy {
                        Strategy::ZeroShot => build_zero_shot(&p.profile),
                        Strategy::FewShot => p.few_shot.clone(),
                    };
                    let prompt = render_prompt(&spec, &p.thread, &self.backends.templates, self.cfg.persona.leaning_slot)?;
                    Ok(generate_reply(
                        generator.as_ref(),
                        &self.backends.generation_cache,
                        &p.key.user_id,
                        &p.key.parent_id,
                        &prompt,
                    )?)
                });
                let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
                self.counts.generation_requests += records.len();
                self.counts.failed_generations += records.iter().filter(|r| r.is_failed()).count();
                self.counts.generated += records.iter().filter(|r| !r.is_failed()).count();
                runs.push(AgentRun {
                    model_id: generator.endpoint().model_id.clone(),
                    strategy,
                    stance: vec![None; records.len()],
                    toxicity: vec![None; records.len()],
                    records,
                });
            }
        }
        Ok(runs)
    }

    fn classify(&mut self, pairs: &[Pair], runs: &mut [AgentRun]) -> Result<Vec<Option<Stance>>, HarnessError> {
        let human = self
            .par_map(pairs, |p| self.backends.stance_of(&p.thread.human_reply.text))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        self.counts.stance_unscored += human.iter().filter(|s| s.is_none()).count();
        for run in runs.iter_mut() {
            let idx: Vec<usize> = (0..pairs.len()).collect();
            let labels = self
                .par_map(&idx, |&i| match run.reply(i) {
                    Some(text) => self.backends.stance_of(text).map(|s| (true, s)),
                    None => Ok((false, None)),
                })
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            self.counts.stance_unscored += labels.iter().filter(|(asked, s)| *asked && s.is_none()).count();
            run.stance = labels.into_iter().map(|(_, s)| s).collect();
        }
        Ok(human)
    }

    fn score_toxicity(
        &mut self,
        pairs: &[Pair],
        runs: &mut [AgentRun],
    ) -> Result<(Vec<Option<f64>>, HashMap<String, Option<f64>>), HarnessError> {
        let human = self
            .par_map(pairs, |p| self.backends.toxicity_of(&p.thread.human_reply.text))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        self.counts.toxicity_unscored += human.iter().filter(|s| s.is_none()).count();
        for run in runs.iter_mut() {
            let idx: Vec<usize> = (0..pairs.len()).collect();
            let scores = self
                .par_map(&idx, |&i| match run.reply(i) {
                    Some(text) => self.backends.toxicity_of(text).map(|s| (true, s)),
                    None => Ok((false, None)),
                })
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            self.counts.toxicity_unscored += scores.iter().filter(|(asked, s)| *asked && s.is_none()).count();
            run.toxicity = scores.into_iter().map(|(_, s)| s).collect();
        }
        // Few-Shot reference tweets, scored once each
        let mut refs: BTreeMap<String, String> = BTreeMap::new();
        if runs.iter().any(|r| r.strategy == Strategy::FewShot) {
            for p in pairs {
                if let PersonaVariant::FewShot { sample_tweets, .. } = &p.few_shot.variant {
                    for t in sample_tweets {
                        refs.entry(t.tweet_id.clone()).or_insert_with(|| t.text.clone());
                    }
                }
            }
        }
        let refs: Vec<(String, String)> = refs.into_iter().collect();
        let scored = self
            .par_map(&refs, |(id, text)| self.backends.toxicity_of(text).map(|s| (id.clone(), s)))
            .into_iter()
            .collect::<Result<HashMap<_, _>, _>>()?;
        self.counts.reference_unscored += scored.values().filter(|s| s.is_none()).count();
        Ok((human, scored))
    }
}

fn write_stage_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(&r).map_err(|e| HarnessError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct GenerationRow<'a> {
    model_id: &'a str,
    strategy: Strategy,
    user_id: &'a str,
    parent_id: &'a str,
    prompt_hash: &'a str,
    reply_text: Option<&'a str>,
    failure: Option<&'a str>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct LabelRow<'a, T> {
    population: &'static str,
    model_id: &'a str,
    strategy: Option<Strategy>,
    user_id: &'a str,
    parent_id: &'a str,
    value: Option<T>,
}

fn label_rows<'a, T: Copy + 'a>(
    pairs: &'a [Pair],
    human: &'a [Option<T>],
    runs: &'a [AgentRun],
    pick: fn(&AgentRun) -> &[Option<T>],
) -> Vec<LabelRow<'a, T>> {
    let mut rows: Vec<_> = pairs
        .iter()
        .zip(human)
        .map(|(p, v)| LabelRow {
            population: "human",
            model_id: "",
            strategy: None,
            user_id: &p.key.user_id,
            parent_id: &p.key.parent_id,
            value: *v,
        })
        .collect();
    for run in runs {
        for (i, p) in pairs.iter().enumerate() {
            if run.records[i].is_failed() {
                continue;
            }
            rows.push(LabelRow {
                population: "agent",
                model_id: &run.model_id,
                strategy: Some(run.strategy),
                user_id: &p.key.user_id,
                parent_id: &p.key.parent_id,
                value: pick(run)[i],
            });
        }
    }
    rows
}

/// Runs every stage up to and including `until`, writing artifacts and the
/// manifest into the run directory.
pub fn run_pipeline(cfg: &RunConfig, until: Stage) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let run_dir = &cfg.run_dir;
    std::fs::create_dir_all(run_dir)?;
    for stale in ARTIFACTS {
        let path = run_dir.join(stale);
        if path.is_dir() {
            std::fs::remove_dir_all(&path)?;
        } else if path.exists() {
            std::fs::remove_file(&path)?;
        }
    }
    let backends = build_backends(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let inputs = InputDigests {
        corpus: String::new(),
        templates: backends.templates.digest(),
        stance_backend: backends.stance.name(),
        toxicity_scorer: backends.toxicity.name(),
        stop_words: backends.tokenizer.stop_words().digest().to_string(),
        entities: backends.tokenizer.lexicon().digest().to_string(),
        tokenizer: backends.tokenizer.name().to_string(),
    };
    let mut p = Pipeline {
        cfg,
        backends,
        pool,
        counts: StageCounts::default(),
        stages: Vec::new(),
        wall: BTreeMap::new(),
        notes: Vec::new(),
        corpus_digest: String::new(),
    };
    let generation_misses_before = p.backends.generation_cache.misses();

    let result = (|| -> Result<(), HarnessError> {
        let (_corpus, pairs) = p.timed(Stage::Ingest, |p| p.ingest())?;
        if until == Stage::Ingest {
            return Ok(());
        }
        let mut runs = p.timed(Stage::Simulate, |p| p.simulate(&pairs))?;
        let gen_rows = runs.iter().flat_map(|r| {
            r.records.iter().map(move |rec| GenerationRow {
                model_id: &r.model_id,
                strategy: r.strategy,
                user_id: &rec.user_id,
                parent_id: &rec.parent_id,
                prompt_hash: &rec.prompt_hash,
                reply_text: rec.reply_text.as_deref(),
                failure: rec.failure.as_deref(),
                temperature: rec.temperature,
                max_tokens: rec.max_tokens,
            })
        });
        write_stage_rows(&run_dir.join("generations.jsonl"), gen_rows)?;
        if until == Stage::Simulate {
            return Ok(());
        }
        let human_stance = p.timed(Stage::Classify, |p| p.classify(&pairs, &mut runs))?;
        let leaning_rows: Vec<&LeaningProfile> = {
            let mut seen = BTreeMap::new();
            for pair in &pairs {
                seen.entry(&pair.key.user_id).or_insert(&pair.profile);
            }
            seen.into_values().collect()
        };
        write_stage_rows(&run_dir.join("leaning.jsonl"), leaning_rows)?;
        write_stage_rows(
            &run_dir.join("stance.jsonl"),
            label_rows(&pairs, &human_stance, &runs, |r| &r.stance),
        )?;
        if until == Stage::Classify {
            return Ok(());
        }
        let (human_tox, reference_tox) = p.timed(Stage::Toxicity, |p| p.score_toxicity(&pairs, &mut runs))?;
        write_stage_rows(
            &run_dir.join("toxicity.jsonl"),
            label_rows(&pairs, &human_tox, &runs, |r| &r.toxicity),
        )?;
        if until == Stage::Toxicity {
            return Ok(());
        }
        let populations = Populations {
            pairs: &pairs,
            runs: &runs,
            human_stance: &human_stance,
            human_toxicity: &human_tox,
            reference_toxicity: &reference_tox,
        };
        let tables = p.timed(Stage::Metrics, |p| {
            report::compute_tables(p.cfg, &populations, &p.backends.tokenizer, &mut p.counts, &mut p.notes)
        })?;
        let metrics_path = run_dir.join("metrics.json");
        std::fs::write(
            &metrics_path,
            serde_json::to_vec_pretty(&tables).map_err(|e| HarnessError::Output {
                path: metrics_path.display().to_string(),
                reason: e.to_string(),
            })?,
        )?;
        if until == Stage::Metrics {
            return Ok(());
        }
        p.timed(Stage::Report, |_| report::write_tables(&run_dir.join("tables"), &tables))?;
        Ok(())
    })();

    if let Err(e) = &result {
        warn!(error = %e, "pipeline stopped early");
        if !is_fatal_backend(e) {
            p.notes.push(format!("stopped: {e}"));
        } else {
            p.notes.push(format!("fatal backend error: {e}"));
        }
    }
    for stage in Stage::ALL {
        if stage > until && !p.stages.iter().any(|s| s.stage == stage) {
            p.notes.push(format!("stage {} not requested", stage.name()));
        }
    }
    let generator_calls = p.backends.generation_cache.misses() - generation_misses_before;
    let runtime = Runtime {
        wall_clock_ms: p.wall.clone(),
        generation_cache_hits: p.backends.generation_cache.hits(),
        generation_cache_misses: p.backends.generation_cache.misses(),
        workers: cfg.workers,
    };
    let manifest = manifest::finish(
        cfg,
        InputDigests {
            corpus: p.corpus_digest.clone(),
            ..inputs
        },
        p.counts.clone(),
        p.stages.clone(),
        p.notes.clone(),
        runtime,
    )?;
    result.map(|_| RunOutcome {
        manifest,
        generator_calls,
    })
}
