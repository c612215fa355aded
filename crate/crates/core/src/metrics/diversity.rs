use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anomaly::{quantile, QuantileMethod};
use super::{CompensatedSum, MetricError};
use crate::corpus::TokenizedDoc;
use crate::hashing::derive_seed;

/// LogTTR: `ln(types + alpha) / ln(tokens + alpha)`.
pub fn log_ttr(doc: &TokenizedDoc, alpha: f64) -> Result<f64, MetricError> {
    if doc.num_tokens == 0 {
        return Err(MetricError::EmptyDocument);
    }
    if alpha <= 0.0 {
        return Err(MetricError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(log_ttr_counts(doc.num_types, doc.num_tokens, alpha))
}

pub fn ttr(doc: &TokenizedDoc) -> Result<f64, MetricError> {
    if doc.num_tokens == 0 {
        return Err(MetricError::EmptyDocument);
    }
    Ok(doc.num_types as f64 / doc.num_tokens as f64)
}

fn log_ttr_counts(types: usize, tokens: usize, alpha: f64) -> f64 {
    (types as f64 + alpha).ln() / (tokens as f64 + alpha).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityMetric {
    LogTtr,
    Ttr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub metric: DiversityMetric,
    pub n_orderings: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Two-sided coverage of the bootstrap interval.
    pub confidence: f64,
    pub quantile_method: QuantileMethod,
    /// Thread count for the bootstrap loop; does not affect results.
    pub workers: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            metric: DiversityMetric::LogTtr,
            n_orderings: 100,
            n_boot: 1000,
            seed: 0,
            alpha: 1.0,
            confidence: 0.95,
            quantile_method: QuantileMethod::Linear,
            workers: 1,
        }
    }
}

/// Diversity of the cumulative concatenation of the first `k` tweets,
/// averaged over random orderings, with a pointwise bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityCurve {
    pub metric: DiversityMetric,
    pub prefix_sizes: Vec<usize>,
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub n_orderings: usize,
    pub n_boot: usize,
    pub seed: u64,
}

/// Documents as interned token ids.
struct Interned {
    docs: Vec<Vec<u32>>,
    vocab: usize,
}

fn intern(docs: &[TokenizedDoc]) -> Interned {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let docs = docs
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(t.as_str()).or_insert(next)
                })
                .collect()
        })
        .collect();
    Interned { docs, vocab: ids.len() }
}

/// Reusable per-thread state for prefix walks.
struct Walker<'a> {
    marks: Vec<u32>,
    stamp: u32,
    /// `ln(x + alpha)` for every possible type or token count.
    ln: &'a [f64],
    metric: DiversityMetric,
}

/// Running compensated mean with the observed range, per prefix.
#[derive(Clone, Copy)]
struct PrefixMean {
    sum: CompensatedSum,
    lo: f64,
    hi: f64,
}

impl PrefixMean {
    const EMPTY: Self = Self {
        sum: CompensatedSum::ZERO,
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    fn add(&mut self, x: f64) {
        self.sum.add(x);
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
    }

    /// Same value as [`mean`] over the added values.
    fn value(&self, count: usize) -> f64 {
        (self.sum.value() / count as f64).clamp(self.lo, self.hi)
    }
}

impl<'a> Walker<'a> {
    fn new(vocab: usize, ln: &'a [f64], metric: DiversityMetric) -> Self {
        Self {
            marks: vec![0; vocab],
            stamp: 0,
            ln,
            metric,
        }
    }

    fn eval(&self, types: usize, tokens: usize) -> f64 {
        match self.metric {
            DiversityMetric::LogTtr => self.ln[types] / self.ln[tokens],
            DiversityMetric::Ttr => types as f64 / tokens as f64,
        }
    }

    /// Adds the metric at every prefix of `order` into `acc`.
    fn accumulate(&mut self, docs: &[Vec<u32>], order: &[usize], acc: &mut [PrefixMean]) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.fill(0);
            self.stamp = 1;
        }
        let (mut types, mut tokens) = (0usize, 0usize);
        for (k, &d) in order.iter().enumerate() {
            for &tok in &docs[d] {
                let m = &mut self.marks[tok as usize];
                if *m != self.stamp {
                    *m = self.stamp;
                    types += 1;
                }
            }
            tokens += docs[d].len();
            acc[k].add(self.eval(types, tokens));
        }
    }

    /// Ordering-averaged curve over the multiset `members` (indices into
    /// `docs`); orderings are drawn in sequence from `rng`.
    fn averaged_curve(&mut self, docs: &[Vec<u32>], members: &[usize], n_orderings: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut acc = vec![PrefixMean::EMPTY; members.len()];
        let mut order = members.to_vec();
        for _ in 0..n_orderings {
            order.copy_from_slice(members);
            order.shuffle(rng);
            self.accumulate(docs, &order, &mut acc);
        }
        acc.iter().map(|a| a.value(n_orderings)).collect()
    }
}

pub fn incremental_diversity_curve(docs: &[TokenizedDoc], cfg: &CurveConfig) -> Result<DiversityCurve, MetricError> {
    if docs.is_empty() {
        return Err(MetricError::Empty);
    }
    if docs.iter().any(TokenizedDoc::is_empty) {
        return Err(MetricError::EmptyDocument);
    }
    if cfg.n_orderings == 0 {
        return Err(MetricError::InvalidParameter("n_orderings must be at least 1".into()));
    }
    if !(0.0 < cfg.confidence && cfg.confidence < 1.0) {
        return Err(MetricError::InvalidParameter(format!("confidence {} outside (0, 1)", cfg.confidence)));
    }
    if cfg.alpha <= 0.0 {
        return Err(MetricError::InvalidParameter(format!("alpha must be positive, got {}", cfg.alpha)));
    }
    let interned = intern(docs);
    let n = docs.len();
    let all: Vec<usize> = (0..n).collect();
    // a resample can repeat the longest document n times
    let max_tokens = n * interned.docs.iter().map(Vec::len).max().unwrap_or(0);
    let ln: Vec<f64> = (0..=max_tokens).map(|x| (x as f64 + cfg.alpha).ln()).collect();
    let point = Walker::new(interned.vocab, &ln, cfg.metric).averaged_curve(
        &interned.docs,
        &all,
        cfg.n_orderings,
        &mut ChaCha8Rng::from_seed(derive_seed(cfg.seed, &["diversity", "ordering"], &[])),
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("thread pool");
    let boots: Vec<Vec<f64>> = pool.install(|| {
        (0..cfg.n_boot)
            .into_par_iter()
            .map_init(
                || Walker::new(interned.vocab, &ln, cfg.metric),
                |walker, b| {
                    let mut rng = ChaCha8Rng::from_seed(derive_seed(cfg.seed, &["diversity", "resample"], &[b as u64]));
                    let members: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    walker.averaged_curve(&interned.docs, &members, cfg.n_orderings, &mut rng)
                },
            )
            .collect()
    });

    let tail = (1.0 - cfg.confidence) / 2.0;
    let mut ci_low = point.clone();
    let mut ci_high = point.clone();
    if !boots.is_empty() {
        let mut column = vec![0.0; boots.len()];
        for k in 0..n {
            for (c, b) in column.iter_mut().zip(&boots) {
                *c = b[k];
            }
            column.sort_by(f64::total_cmp);
            // the interval always contains the point estimate
            ci_low[k] = quantile(&column, tail, cfg.quantile_method).min(point[k]);
            ci_high[k] = quantile(&column, 1.0 - tail, cfg.quantile_method).max(point[k]);
        }
    }
    Ok(DiversityCurve {
        metric: cfg.metric,
        prefix_sizes: (1..=n).collect(),
        mean: point,
        ci_low,
        ci_high,
        n_orderings: cfg.n_orderings,
        n_boot: cfg.n_boot,
        seed: cfg.seed,
    })
}
