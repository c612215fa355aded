//! In-process mock model with known distortions.
//!
//! Few-Shot replies copy the stance phrases and toxic terms of one randomly
//! chosen prompt tweet, then apply the configured distortions:
//! a leaning bias forces a stance with probability `|bias|`, a toxicity
//! shift appends terms whose stub weights sum to the shift, and each marker
//! token with prompt frequency `q` appears with probability `min(1, k q)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::marker_tokens;
use crate::hashing::FieldDigest;
use crate::http::{Delivered, PostError};
use crate::metrics::{normalize_marker, MarkerKind};
use crate::persona::{Generator, ModelEndpoint, RenderedPrompt, Strategy};
use crate::stance::{LexiconStance, Stance};
use crate::toxscore::LexicalToxicity;

const TWEETS_PREFIX: &str = "- **Your Tweets:** ";
const LEANING_PREFIX: &str = "You are a Twitter user with a ";
const NEUTRAL_FILLER: [&str; 12] = [
    "honestly", "people", "think", "about", "this", "today", "really", "news", "country", "time", "right", "well",
];

fn one() -> f64 {
    1.0
}

fn min_words() -> usize {
    4
}

fn max_words() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockBehavior {
    #[serde(default)]
    pub seed: u64,
    /// In [-1, 1]; forces the sign of the bias with probability `|bias|`.
    #[serde(default)]
    pub leaning_bias: f64,
    /// Non-negative toxicity added on top of the copied prompt tweet.
    #[serde(default)]
    pub toxicity_shift: f64,
    /// Marker amplification used when a token has no explicit entry.
    #[serde(default = "one")]
    pub default_amplification: f64,
    /// Per-token amplification, keyed by the normalized marker.
    #[serde(default)]
    pub amplification: BTreeMap<String, f64>,
    #[serde(default = "min_words")]
    pub min_words: usize,
    #[serde(default = "max_words")]
    pub max_words: usize,
}

impl Default for MockBehavior {
    fn default() -> Self {
        Self {
            seed: 0,
            leaning_bias: 0.0,
            toxicity_shift: 0.0,
            default_amplification: 1.0,
            amplification: BTreeMap::new(),
            min_words: min_words(),
            max_words: max_words(),
        }
    }
}

impl MockBehavior {
    pub fn validate(&self) -> Result<(), String> {
        if !(-1.0..=1.0).contains(&self.leaning_bias) {
            return Err(format!("leaning_bias {} outside [-1, 1]", self.leaning_bias));
        }
        if !(self.toxicity_shift >= 0.0 && self.toxicity_shift <= 1.0) {
            return Err(format!("toxicity_shift {} outside [0, 1]", self.toxicity_shift));
        }
        if self.min_words > self.max_words {
            return Err("min_words exceeds max_words".into());
        }
        let bad_k = std::iter::once(&self.default_amplification)
            .chain(self.amplification.values())
            .find(|k| !(**k >= 0.0 && k.is_finite()));
        if let Some(k) = bad_k {
            return Err(format!("amplification {k} must be finite and non-negative"));
        }
        Ok(())
    }

    fn amplification_for(&self, normalized: &str) -> f64 {
        self.amplification
            .get(normalized)
            .copied()
            .unwrap_or(self.default_amplification)
    }
}

pub struct MockGenerator {
    endpoint: ModelEndpoint,
    behavior: MockBehavior,
    stance: LexiconStance,
    toxicity: LexicalToxicity,
}

impl MockGenerator {
    pub fn new(
        endpoint: ModelEndpoint,
        behavior: MockBehavior,
        stance: LexiconStance,
        toxicity: LexicalToxicity,
    ) -> Result<Self, String> {
        behavior.validate()?;
        Ok(Self {
            endpoint,
            behavior,
            stance,
            toxicity,
        })
    }

    pub fn behavior(&self) -> &MockBehavior {
        &self.behavior
    }

    fn rng_for(&self, prompt: &RenderedPrompt) -> ChaCha8Rng {
        let mut d = FieldDigest::new("mock-reply");
        d.push_u64("seed", self.behavior.seed)
            .push_str("model", &self.endpoint.model_id)
            .push_str("prompt", &prompt.content_hash);
        ChaCha8Rng::from_seed(d.finish_seed())
    }

    fn forced_stance(&self, rng: &mut ChaCha8Rng) -> Option<Stance> {
        let b = self.behavior.leaning_bias;
        (b != 0.0 && rng.random::<f64>() < b.abs()).then_some(if b > 0.0 { Stance::Republican } else { Stance::Democrat })
    }

    /// Terms whose stub weights add up to the shift, largest first.
    fn shift_terms(&self) -> Vec<String> {
        let mut remaining = (self.behavior.toxicity_shift * 1e6).round() as i64;
        let mut terms: Vec<(String, i64)> = self
            .toxicity
            .terms()
            .into_iter()
            .map(|(t, w)| (t.to_string(), (w * 1e6).round() as i64))
            .filter(|(_, w)| *w > 0)
            .collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut out = Vec::new();
        for (t, w) in &terms {
            while *w <= remaining {
                out.push(t.clone());
                remaining -= w;
            }
        }
        out
    }

    fn is_reserved(&self, word: &str) -> bool {
        self.stance.mentions_word(word) || self.toxicity.weight(word).is_some()
    }

    fn filler(&self, vocab: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
        let n = rng.random_range(self.behavior.min_words..=self.behavior.max_words);
        let fallback: Vec<String> = NEUTRAL_FILLER.iter().map(|s| s.to_string()).collect();
        let pool = if vocab.is_empty() { &fallback } else { vocab };
        (0..n).map(|_| pool.choose(rng).expect("non-empty").clone()).collect()
    }

    fn few_shot_reply(&self, samples: &[String], rng: &mut ChaCha8Rng) -> String {
        let mut vocab = BTreeSet::new();
        for s in samples {
            for w in s.unicode_words() {
                let w = w.to_lowercase();
                if !self.is_reserved(&w) && w.chars().any(char::is_alphabetic) {
                    vocab.insert(w);
                }
            }
        }
        let vocab: Vec<String> = vocab.into_iter().collect();
        let mut parts = self.filler(&vocab, rng);
        let Some(source) = samples.choose(rng) else {
            return parts.join(" ");
        };
        match self.forced_stance(rng) {
            Some(side) => parts.extend(self.stance.canonical_phrase(side).map(str::to_string)),
            None => {
                for (phrase, _, n) in self.stance.matches(source) {
                    parts.extend(std::iter::repeat_n(phrase.to_string(), n));
                }
            }
        }
        parts.extend(self.toxicity.toxic_words(source));
        parts.extend(self.shift_terms());

        // marker inclusion probabilities from their prompt frequencies
        let markers: Vec<_> = samples.iter().map(|s| marker_tokens(s)).collect();
        for kind in MarkerKind::ALL {
            let mut df: BTreeMap<String, (usize, String)> = BTreeMap::new();
            for m in &markers {
                let tokens = match kind {
                    MarkerKind::Emoji => &m.emojis,
                    MarkerKind::Hashtag => &m.hashtags,
                    MarkerKind::Mention => &m.mentions,
                };
                let distinct: BTreeMap<String, &String> =
                    tokens.iter().map(|t| (normalize_marker(kind, t), t)).collect();
                for (norm, raw) in distinct {
                    df.entry(norm).or_insert((0, raw.clone())).0 += 1;
                }
            }
            for (norm, (count, raw)) in df {
                let q = count as f64 / samples.len() as f64;
                let p = (self.behavior.amplification_for(&norm) * q).min(1.0);
                if rng.random::<f64>() < p {
                    parts.push(raw);
                }
            }
        }
        parts.join(" ")
    }

    fn zero_shot_reply(&self, leaning: f64, rng: &mut ChaCha8Rng) -> String {
        let mut parts = self.filler(&[], rng);
        let stance = self.forced_stance(rng).or_else(|| {
            (rng.random::<f64>() < leaning.abs()).then_some(if leaning > 0.0 { Stance::Republican } else { Stance::Democrat })
        });
        if let Some(side) = stance {
            parts.extend(self.stance.canonical_phrase(side).map(str::to_string));
        }
        parts.extend(self.shift_terms());
        parts.join(" ")
    }
}

/// Sample tweets embedded in a rendered Few-Shot prompt.
pub fn prompt_tweets(prompt: &str) -> Option<Vec<String>> {
    let line = prompt.lines().find_map(|l| l.strip_prefix(TWEETS_PREFIX))?;
    serde_json::from_str(line.trim_end()).ok()
}

/// Leaning value embedded in a rendered Zero-Shot prompt.
pub fn prompt_leaning(prompt: &str) -> Option<f64> {
    let line = prompt.lines().find_map(|l| l.strip_prefix(LEANING_PREFIX))?;
    let value = line.strip_suffix(" political leaning:")?;
    value.parse().ok().or_else(|| {
        Stance::ALL
            .iter()
            .find(|s| s.name() == value)
            .map(|s| s.value() as f64)
    })
}

impl Generator for MockGenerator {
    fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<Delivered<String>, PostError> {
        let mut rng = self.rng_for(prompt);
        let value = match prompt.template_id {
            Strategy::FewShot => self.few_shot_reply(&prompt_tweets(&prompt.bytes).unwrap_or_default(), &mut rng),
            Strategy::ZeroShot => self.zero_shot_reply(prompt_leaning(&prompt.bytes).unwrap_or(0.0), &mut rng),
        };
        Ok(Delivered { value, retries: 0 })
    }
}
