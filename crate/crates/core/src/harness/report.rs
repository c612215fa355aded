use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::manifest::StageCounts;
use super::pipeline::{AgentRun, Pair};
use super::HarnessError;
use crate::corpus::{char_length, length_filter, marker_tokens, MarkerTokens, Tokenizer};
use crate::metrics::{
    aggregate_consistency, align_pairs, exaggeration_ratios, incremental_diversity_curve, length_anomaly_report,
    CurveConfig, DiversityMetric, MarkerKind, MetricError,
};
use crate::persona::{PersonaVariant, Strategy};
use crate::stance::{conditional_leaning_distribution, LeaningClass, Stance};
use crate::toxscore::{overshoot_summary, percentile_rank, toxic_fraction, ReferenceSet};

/// Table kinds every complete run emits, in file-name form.
pub const TABLE_KINDS: [&str; 7] = [
    "diversity_curves",
    "transition_matrices",
    "consistency",
    "toxic_fractions",
    "percentile_histograms",
    "exaggeration",
    "anomalies",
];

/// Per-pair inputs to the metric stage.
pub(super) struct Populations<'a> {
    pub pairs: &'a [Pair],
    pub runs: &'a [AgentRun],
    pub human_stance: &'a [Option<Stance>],
    pub human_toxicity: &'a [Option<f64>],
    pub reference_toxicity: &'a HashMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityRow {
    pub population: &'static str,
    pub model_id: String,
    pub strategy: Option<Strategy>,
    pub class: &'static str,
    pub tweets: usize,
    pub prefix: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRow {
    pub population: &'static str,
    pub model_id: String,
    pub strategy: Option<Strategy>,
    pub user_class: &'static str,
    pub reply_stance: &'static str,
    pub count: u64,
    /// Empty when the user-class row has no replies.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyTableRow {
    pub model_id: String,
    pub strategy: Strategy,
    pub class: &'static str,
    pub users: usize,
    pub replies: usize,
    pub loss_human: Option<f64>,
    pub loss_agent: Option<f64>,
    pub consistency_human: Option<f64>,
    pub consistency_agent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToxicFractionRow {
    pub population: &'static str,
    pub model_id: String,
    pub strategy: Option<Strategy>,
    pub class: &'static str,
    pub scored: usize,
    pub toxic: usize,
    pub fraction: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileRow {
    pub population: &'static str,
    pub model_id: String,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
    pub replies: usize,
    pub mean_rank: f64,
    pub mass_above_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExaggerationTableRow {
    pub model_id: String,
    pub strategy: Strategy,
    pub kind: &'static str,
    pub class: &'static str,
    pub token: String,
    pub human_tweets: usize,
    pub llm_tweets: usize,
    pub human_corpus: usize,
    pub llm_corpus: usize,
    pub human_rel_freq: f64,
    pub llm_rel_freq: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyRow {
    pub population: &'static str,
    pub model_id: String,
    pub strategy: Option<Strategy>,
    pub n: usize,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub percentile_of_limit: f64,
    pub anomalies: usize,
    pub outside_fences: usize,
    pub limit: usize,
    pub quantile_method: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStatsRow {
    pub population: &'static str,
    pub model_id: String,
    pub strategy: Option<Strategy>,
    pub class: &'static str,
    pub tweets: usize,
    pub tokens: usize,
    pub types: usize,
    pub emoji_occurrences: usize,
    pub hashtag_occurrences: usize,
    pub mention_occurrences: usize,
    pub pct_without_emoji: Option<f64>,
    pub pct_without_hashtag: Option<f64>,
    pub pct_without_mention: Option<f64>,
}

/// All report tables of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Tables {
    pub diversity_curves: Vec<DiversityRow>,
    pub transition_matrices: Vec<TransitionRow>,
    pub consistency: Vec<ConsistencyTableRow>,
    pub toxic_fractions: Vec<ToxicFractionRow>,
    /// `None` when no Few-Shot replies exist.
    pub percentile_histograms: Option<Vec<PercentileRow>>,
    pub exaggeration: Vec<ExaggerationTableRow>,
    pub anomalies: Vec<AnomalyRow>,
    pub corpus_stats: Vec<CorpusStatsRow>,
}

/// One population of replies: the human replies, or one model under one
/// strategy. Entries are pair indices with the reply text.
struct Group<'a> {
    population: &'static str,
    model_id: String,
    strategy: Option<Strategy>,
    replies: Vec<(usize, &'a str)>,
    stance: Vec<Option<Stance>>,
    toxicity: Vec<Option<f64>>,
}

fn class_name(c: Option<LeaningClass>) -> &'static str {
    c.map_or("all", |c| c.name())
}

fn groups<'a>(pop: &Populations<'a>) -> Vec<Group<'a>> {
    let mut out = vec![Group {
        population: "human",
        model_id: String::new(),
        strategy: None,
        replies: pop
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.thread.human_reply.text.as_str()))
            .collect(),
        stance: pop.human_stance.to_vec(),
        toxicity: pop.human_toxicity.to_vec(),
    }];
    for run in pop.runs {
        let idx: Vec<usize> = (0..pop.pairs.len()).filter(|&i| !run.records[i].is_failed()).collect();
        out.push(Group {
            population: "agent",
            model_id: run.model_id.clone(),
            strategy: Some(run.strategy),
            replies: idx.iter().map(|&i| (i, run.reply(i).expect("not failed"))).collect(),
            stance: idx.iter().map(|&i| run.stance[i]).collect(),
            toxicity: idx.iter().map(|&i| run.toxicity[i]).collect(),
        });
    }
    out
}

pub(super) fn compute_tables(
    cfg: &RunConfig,
    pop: &Populations<'_>,
    tokenizer: &dyn Tokenizer,
    counts: &mut StageCounts,
    notes: &mut Vec<String>,
) -> Result<Tables, HarnessError> {
    let groups = groups(pop);
    let class_of = |i: usize| pop.pairs[i].profile.class;
    let mut t = Tables::default();
    let limit = cfg.thresholds.length_limit;

    for g in &groups {
        // length anomalies over all replies in the population
        let lengths: Vec<usize> = g.replies.iter().map(|(_, text)| char_length(text)).collect();
        if !lengths.is_empty() {
            let r = length_anomaly_report(&lengths, limit, cfg.metrics.quantile_method)?;
            t.anomalies.push(AnomalyRow {
                population: g.population,
                model_id: g.model_id.clone(),
                strategy: g.strategy,
                n: r.n,
                q1: r.q1,
                q3: r.q3,
                iqr: r.iqr,
                lower_fence: r.lower_fence,
                upper_fence: r.upper_fence,
                percentile_of_limit: r.percentile_of_limit,
                anomalies: r.anomalies,
                outside_fences: r.outside_fences,
                limit,
                quantile_method: r.quantile_method.name(),
            });
        }

        // user-class groupings: diversity, corpus statistics, toxicity
        for class in std::iter::once(None).chain(Stance::ALL.map(Some)) {
            let members: Vec<usize> = (0..g.replies.len())
                .filter(|&j| class.is_none_or(|c| class_of(g.replies[j].0) == c))
                .collect();
            let texts: Vec<&str> = members.iter().map(|&j| g.replies[j].1).collect();
            let docs: Vec<_> = texts.iter().map(|text| tokenizer.tokenize(text)).collect();
            let markers: Vec<MarkerTokens> = texts.iter().map(|text| marker_tokens(text)).collect();
            t.corpus_stats.push(corpus_stats(g, class, &docs, &markers));

            let kept = length_filter(texts.iter().copied(), limit).kept;
            let docs: Vec<_> = kept.iter().map(|text| tokenizer.tokenize(text)).filter(|d| !d.is_empty()).collect();
            if class.is_none() {
                counts.length_anomalies += texts.len() - kept.len();
                counts.empty_documents += kept.len() - docs.len();
            }
            if !docs.is_empty() {
                let curve = incremental_diversity_curve(
                    &docs,
                    &CurveConfig {
                        metric: DiversityMetric::LogTtr,
                        n_orderings: cfg.thresholds.n_orderings,
                        n_boot: cfg.thresholds.n_boot,
                        seed: cfg.seed,
                        alpha: cfg.metrics.alpha,
                        confidence: cfg.metrics.confidence,
                        quantile_method: cfg.metrics.quantile_method,
                        workers: cfg.workers,
                    },
                )?;
                for (k, prefix) in curve.prefix_sizes.iter().enumerate() {
                    t.diversity_curves.push(DiversityRow {
                        population: g.population,
                        model_id: g.model_id.clone(),
                        strategy: g.strategy,
                        class: class_name(class),
                        tweets: docs.len(),
                        prefix: *prefix,
                        mean: curve.mean[k],
                        ci_low: curve.ci_low[k],
                        ci_high: curve.ci_high[k],
                    });
                }
            }

            let scores: Vec<f64> = members.iter().filter_map(|&j| g.toxicity[j]).collect();
            let toxic = scores.iter().filter(|&&s| s > cfg.thresholds.toxicity).count();
            t.toxic_fractions.push(ToxicFractionRow {
                population: g.population,
                model_id: g.model_id.clone(),
                strategy: g.strategy,
                class: class_name(class),
                scored: scores.len(),
                toxic,
                fraction: toxic_fraction(&scores, cfg.thresholds.toxicity).ok(),
                threshold: cfg.thresholds.toxicity,
            });
        }

        // reply stance conditioned on the user's class
        let matrix = conditional_leaning_distribution(
            g.replies
                .iter()
                .zip(&g.stance)
                .filter_map(|((i, _), s)| s.map(|s| (class_of(*i), s))),
        );
        for user_class in Stance::ALL {
            for reply in Stance::ALL {
                t.transition_matrices.push(TransitionRow {
                    population: g.population,
                    model_id: g.model_id.clone(),
                    strategy: g.strategy,
                    user_class: user_class.name(),
                    reply_stance: reply.name(),
                    count: matrix.counts[user_class.index()][reply.index()],
                    probability: matrix
                        .row_defined(user_class)
                        .then(|| matrix.probability(user_class, reply)),
                });
            }
        }
    }

    let human = &groups[0];
    for (g, run) in groups[1..].iter().zip(pop.runs) {
        // consistency over pairs where both replies carry a stance label
        let mut h = Vec::new();
        let mut a = Vec::new();
        for (j, &(i, _)) in g.replies.iter().enumerate() {
            if let (Some(hs), Some(as_)) = (pop.human_stance[i], g.stance[j]) {
                h.push((pop.pairs[i].key.clone(), class_of(i), hs));
                a.push((pop.pairs[i].key.clone(), class_of(i), as_));
            }
        }
        counts.consistency_excluded += pop.pairs.len() - a.len();
        let report = aggregate_consistency(&align_pairs(&h, &a)?)?;
        for row in report.rows {
            t.consistency.push(ConsistencyTableRow {
                model_id: run.model_id.clone(),
                strategy: run.strategy,
                class: row.class.name(),
                users: row.users,
                replies: row.replies,
                loss_human: row.loss_human,
                loss_agent: row.loss_agent,
                consistency_human: row.consistency_human,
                consistency_agent: row.consistency_agent,
            });
        }

        // exaggeration grouped by each tweet's own stance
        let human_markers: Vec<(Option<Stance>, MarkerTokens)> = human
            .replies
            .iter()
            .zip(&human.stance)
            .map(|((_, text), s)| (*s, marker_tokens(text)))
            .collect();
        let llm_markers: Vec<(Option<Stance>, MarkerTokens)> = g
            .replies
            .iter()
            .zip(&g.stance)
            .map(|((_, text), s)| (*s, marker_tokens(text)))
            .collect();
        for class in std::iter::once(None).chain(Stance::ALL.map(Some)) {
            let pick = |xs: &[(Option<Stance>, MarkerTokens)]| -> Vec<MarkerTokens> {
                xs.iter()
                    .filter(|(s, _)| class.is_none_or(|c| *s == Some(c)))
                    .map(|(_, m)| m.clone())
                    .collect()
            };
            let (hm, lm) = (pick(&human_markers), pick(&llm_markers));
            for kind in MarkerKind::ALL {
                let table = match exaggeration_ratios(&hm, &lm, kind, class) {
                    Ok(t) => t,
                    Err(MetricError::Empty) => continue,
                    Err(e) => return Err(e.into()),
                };
                for r in table.rows {
                    t.exaggeration.push(ExaggerationTableRow {
                        model_id: run.model_id.clone(),
                        strategy: run.strategy,
                        kind: kind.name(),
                        class: class_name(class),
                        token: r.token,
                        human_tweets: r.human_tweets,
                        llm_tweets: r.llm_tweets,
                        human_corpus: table.human_corpus,
                        llm_corpus: table.llm_corpus,
                        human_rel_freq: r.human_rel_freq,
                        llm_rel_freq: r.llm_rel_freq,
                        ratio: r.ratio,
                    });
                }
            }
        }
    }

    t.percentile_histograms = percentile_tables(cfg, pop, &groups, counts)?;
    if t.percentile_histograms.is_none() {
        notes.push("no Few-Shot replies: percentile histograms not produced".into());
    }
    Ok(t)
}

/// Percentile ranks of each reply's toxicity among the toxicity of the
/// Few-Shot reference tweets in its own prompt.
fn percentile_tables(
    cfg: &RunConfig,
    pop: &Populations<'_>,
    groups: &[Group<'_>],
    counts: &mut StageCounts,
) -> Result<Option<Vec<PercentileRow>>, HarnessError> {
    let few_shot: Vec<&Group> = groups
        .iter()
        .skip(1)
        .filter(|g| g.strategy == Some(Strategy::FewShot) && !g.replies.is_empty())
        .collect();
    if few_shot.is_empty() {
        return Ok(None);
    }
    let refs: Vec<Option<ReferenceSet>> = pop
        .pairs
        .iter()
        .map(|p| match &p.few_shot.variant {
            PersonaVariant::FewShot { sample_tweets, .. } => {
                let scores: Vec<f64> = sample_tweets
                    .iter()
                    .filter_map(|t| pop.reference_toxicity.get(&t.tweet_id).copied().flatten())
                    .collect();
                ReferenceSet::new(scores).ok()
            }
            PersonaVariant::ZeroShot { .. } => None,
        })
        .collect();
    let bins = cfg.metrics.histogram_bins.max(1);
    let mut rows = Vec::new();
    for g in std::iter::once(&groups[0]).chain(few_shot) {
        let ranks: Vec<f64> = g
            .replies
            .iter()
            .zip(&g.toxicity)
            .filter_map(|((i, _), t)| Some(percentile_rank((*t)?, refs[*i].as_ref()?)))
            .collect();
        counts.percentile_excluded += g.replies.len() - ranks.len();
        if ranks.is_empty() {
            continue;
        }
        let summary = overshoot_summary(&ranks, bins)?;
        for (b, &count) in summary.histogram.iter().enumerate() {
            rows.push(PercentileRow {
                population: g.population,
                model_id: g.model_id.clone(),
                bin_low: b as f64 / bins as f64,
                bin_high: (b + 1) as f64 / bins as f64,
                count,
                replies: summary.replies,
                mean_rank: summary.mean_rank,
                mass_above_half: summary.mass_above_half,
            });
        }
    }
    Ok(Some(rows))
}

fn corpus_stats(
    g: &Group<'_>,
    class: Option<LeaningClass>,
    docs: &[crate::corpus::TokenizedDoc],
    markers: &[MarkerTokens],
) -> CorpusStatsRow {
    let tokens = docs.iter().map(|d| d.tokens.len()).sum();
    let types = docs
        .iter()
        .flat_map(|d| d.tokens.iter())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let n = markers.len();
    let pct_without = |f: fn(&MarkerTokens) -> bool| {
        (n > 0).then(|| 100.0 * markers.iter().filter(|m| !f(m)).count() as f64 / n as f64)
    };
    CorpusStatsRow {
        population: g.population,
        model_id: g.model_id.clone(),
        strategy: g.strategy,
        class: class_name(class),
        tweets: n,
        tokens,
        types,
        emoji_occurrences: markers.iter().map(|m| m.emojis.len()).sum(),
        hashtag_occurrences: markers.iter().map(|m| m.hashtags.len()).sum(),
        mention_occurrences: markers.iter().map(|m| m.mentions.len()).sum(),
        pct_without_emoji: pct_without(|m| !m.emojis.is_empty()),
        pct_without_hashtag: pct_without(|m| !m.hashtags.is_empty()),
        pct_without_mention: pct_without(|m| !m.mentions.is_empty()),
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), HarnessError> {
    let csv_path = dir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| output_error(&csv_path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| output_error(&csv_path, e))?;
    }
    w.flush()?;
    let json_path = dir.join(format!("{name}.json"));
    let json = serde_json::to_vec_pretty(rows).map_err(|e| output_error(&json_path, e))?;
    std::fs::write(&json_path, json)?;
    Ok(())
}

/// Writes `<kind>.csv` and `<kind>.json` per table; returns the file names.
pub(super) fn write_tables(dir: &Path, t: &Tables) -> Result<Vec<String>, HarnessError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    write_table(dir, "diversity_curves", &t.diversity_curves)?;
    write_table(dir, "transition_matrices", &t.transition_matrices)?;
    write_table(dir, "consistency", &t.consistency)?;
    write_table(dir, "toxic_fractions", &t.toxic_fractions)?;
    if let Some(rows) = &t.percentile_histograms {
        write_table(dir, "percentile_histograms", rows)?;
    }
    write_table(dir, "exaggeration", &t.exaggeration)?;
    write_table(dir, "anomalies", &t.anomalies)?;
    write_table(dir, "corpus_stats", &t.corpus_stats)?;
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    Ok(names)
}

/// Class counts of pairs, for the manifest.
pub(super) fn class_counts(pairs: &[Pair]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for p in pairs {
        *m.entry(p.profile.class.name().to_string()).or_insert(0) += 1;
    }
    m
}
