//! Persona specifications, prompt rendering and reply generation.
//!
//! A Zero-Shot persona carries only the user's leaning; a Few-Shot persona
//! carries usernames, bios and 30 tweets written before the reply it is
//! asked to imitate.

mod generate;
mod render;

pub use generate::{
    generate_reply, generation_cache_key, EchoStub, GenerationRecord, Generator, HttpChatGenerator, ModelEndpoint,
    Provider,
};
pub use render::{render_prompt, LeaningSlot, RenderedPrompt, Templates};

use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{RawTweet, UserHistory};
use crate::hashing::derive_seed;
use crate::http::PostError;
use crate::stance::{LeaningClass, LeaningProfile};

/// Sample tweets given to a Few-Shot persona.
pub const FEW_SHOT_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    FewShot,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::ZeroShot, Strategy::FewShot];

    pub fn id(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::FewShot => "few_shot",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Strategy {
    type Err = PersonaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" | "zero_shot" | "zero-shot" => Ok(Strategy::ZeroShot),
            "few" | "few_shot" | "few-shot" => Ok(Strategy::FewShot),
            other => Err(PersonaError::UnknownStrategy(other.to_string())),
        }
    }
}

/// How Few-Shot sample tweets are chosen among the eligible prior tweets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SampleSelection {
    /// The `n` most recent tweets before the target.
    #[default]
    Recent,
    /// `n` tweets drawn uniformly without replacement, seeded per user and target.
    Uniform { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PersonaVariant {
    ZeroShot {
        leaning: f64,
        class: LeaningClass,
    },
    FewShot {
        usernames: Vec<String>,
        bios: Vec<String>,
        /// Oldest first.
        sample_tweets: Vec<RawTweet>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub user_id: String,
    pub variant: PersonaVariant,
}

impl PersonaSpec {
    pub fn strategy(&self) -> Strategy {
        match self.variant {
            PersonaVariant::ZeroShot { .. } => Strategy::ZeroShot,
            PersonaVariant::FewShot { .. } => Strategy::FewShot,
        }
    }

    /// Sample tweet texts, empty for Zero-Shot.
    pub fn sample_texts(&self) -> Vec<&str> {
        match &self.variant {
            PersonaVariant::FewShot { sample_tweets, .. } => sample_tweets.iter().map(|t| t.text.as_str()).collect(),
            PersonaVariant::ZeroShot { .. } => Vec::new(),
        }
    }

    /// True when every sample tweet predates `target`.
    pub fn predates(&self, target: DateTime<Utc>) -> bool {
        match &self.variant {
            PersonaVariant::FewShot { sample_tweets, .. } => sample_tweets.iter().all(|t| t.timestamp < target),
            PersonaVariant::ZeroShot { .. } => true,
        }
    }
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("user {user_id} has {available} tweets before the target reply, {required} required")]
    Ineligible {
        user_id: String,
        available: usize,
        required: usize,
    },
    #[error("template slot {{{0}}} has no value")]
    MissingSlot(String),
    #[error("template {template} lacks slot {{{slot}}}")]
    TemplateSlotAbsent { template: &'static str, slot: &'static str },
    #[error("unknown strategy `{0}` (expected zero or few)")]
    UnknownStrategy(String),
    #[error("endpoint {model_id}: {reason}")]
    Endpoint { model_id: String, reason: String },
    #[error("generation for {model_id} failed fatally: {source}")]
    Fatal {
        model_id: String,
        #[source]
        source: PostError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn build_zero_shot(profile: &LeaningProfile) -> PersonaSpec {
    PersonaSpec {
        user_id: profile.user_id.clone(),
        variant: PersonaVariant::ZeroShot {
            leaning: profile.score,
            class: profile.class,
        },
    }
}

/// Builds a Few-Shot persona from tweets strictly older than `target`.
pub fn build_few_shot(
    history: &UserHistory,
    target: DateTime<Utc>,
    n: usize,
    selection: SampleSelection,
) -> Result<PersonaSpec, PersonaError> {
    let prior = history.before(target);
    if prior.len() < n {
        return Err(PersonaError::Ineligible {
            user_id: history.user_id.clone(),
            available: prior.len(),
            required: n,
        });
    }
    let sample_tweets = match selection {
        SampleSelection::Recent => prior[prior.len() - n..].to_vec(),
        SampleSelection::Uniform { seed } => {
            let stream = derive_seed(
                seed,
                &["few-shot", &history.user_id],
                &[target.timestamp_micros() as u64],
            );
            let mut rng = ChaCha8Rng::from_seed(stream);
            let mut picked = sample(&mut rng, prior.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| prior[i].clone()).collect()
        }
    };
    Ok(PersonaSpec {
        user_id: history.user_id.clone(),
        variant: PersonaVariant::FewShot {
            usernames: history.usernames.clone(),
            bios: history.bios.clone(),
            sample_tweets,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stance::{bin_leaning, Stance};
    use chrono::TimeZone;
    use proptest::prelude::*;
    use super::Strategy;

    fn tweet(i: i64, ts: i64) -> RawTweet {
        RawTweet {
            tweet_id: format!("t{i}"),
            author_id: "u".into(),
            text: format!("tweet number {i}"),
            parent_id: None,
            timestamp: Utc.timestamp_opt(ts, 0).unwrap(),
        }
    }

    pub(crate) fn history(n: usize) -> UserHistory {
        UserHistory {
            user_id: "u".into(),
            usernames: vec!["handle".into()],
            bios: vec!["a bio".into()],
            history: (0..n as i64).map(|i| tweet(i, 1_000 + i * 10)).collect(),
        }
    }

    #[test]
    fn zero_shot_passes_leaning_through() {
        for score in [1.0, -0.64, 0.0] {
            let profile = LeaningProfile {
                user_id: "u".into(),
                score,
                messages: 50,
                class: bin_leaning(score).unwrap(),
            };
            let spec = build_zero_shot(&profile);
            assert!(matches!(spec.variant, PersonaVariant::ZeroShot { leaning, .. } if leaning == score));
            assert!(spec.sample_texts().is_empty());
        }
    }

    #[test]
    fn exactly_thirty_prior_tweets_are_all_selected() {
        let h = history(31);
        let target = h.history[30].timestamp;
        let spec = build_few_shot(&h, target, 30, SampleSelection::Recent).unwrap();
        let PersonaVariant::FewShot { sample_tweets, .. } = &spec.variant else { panic!() };
        assert_eq!(sample_tweets, &h.history[..30]);
    }

    #[test]
    fn recency_takes_latest_prior_tweets() {
        let h = history(150);
        let target = h.history[100].timestamp;
        let spec = build_few_shot(&h, target, 30, SampleSelection::Recent).unwrap();
        // oracle: filter, sort by time descending, take 30, restore ascending order
        let mut oracle: Vec<_> = h.history.iter().filter(|t| t.timestamp < target).cloned().collect();
        oracle.sort_by(|a, b| b.timestamp.cmp(&a.timestamp));
        oracle.truncate(30);
        oracle.reverse();
        let PersonaVariant::FewShot { sample_tweets, .. } = &spec.variant else { panic!() };
        assert_eq!(sample_tweets, &oracle);
    }

    #[test]
    fn too_few_prior_tweets_is_ineligible() {
        let h = history(40);
        let target = h.history[29].timestamp;
        let err = build_few_shot(&h, target, 30, SampleSelection::Recent).unwrap_err();
        assert!(matches!(err, PersonaError::Ineligible { available: 29, required: 30, .. }));
    }

    #[test]
    fn same_timestamp_as_target_is_excluded() {
        let mut h = history(40);
        let target = h.history[35].timestamp;
        h.history[34].timestamp = target;
        let spec = build_few_shot(&h, target, 30, SampleSelection::Recent).unwrap();
        assert!(spec.predates(target));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("zero".parse::<Strategy>().unwrap(), Strategy::ZeroShot);
        assert_eq!("few_shot".parse::<Strategy>().unwrap(), Strategy::FewShot);
        assert!("many".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::FewShot).unwrap(), "\"few_shot\"");
    }

    proptest! {
        #[test]
        fn few_shot_never_leaks(n_hist in 30usize..120, cut in 0usize..120, seed in any::<u64>(), uniform in any::<bool>()) {
            let h = history(n_hist);
            let cut = cut.min(n_hist - 1);
            let target = h.history[cut].timestamp;
            let sel = if uniform { SampleSelection::Uniform { seed } } else { SampleSelection::Recent };
            match build_few_shot(&h, target, 30, sel) {
                Ok(spec) => {
                    prop_assert!(cut >= 30);
                    prop_assert!(spec.predates(target));
                    let texts = spec.sample_texts();
                    prop_assert_eq!(texts.len(), 30);
                    let PersonaVariant::FewShot { sample_tweets, .. } = &spec.variant else { unreachable!() };
                    prop_assert!(sample_tweets.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
                    let mut ids: Vec<_> = sample_tweets.iter().map(|t| &t.tweet_id).collect();
                    ids.dedup();
                    prop_assert_eq!(ids.len(), 30);
                }
                Err(PersonaError::Ineligible { available, .. }) => prop_assert_eq!(available, cut),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn uniform_selection_is_seed_deterministic(seed in any::<u64>()) {
            let h = history(90);
            let target = h.history[80].timestamp;
            let a = build_few_shot(&h, target, 30, SampleSelection::Uniform { seed }).unwrap();
            let b = build_few_shot(&h, target, 30, SampleSelection::Uniform { seed }).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_shot_class_matches_profile() {
        let profile = LeaningProfile {
            user_id: "u".into(),
            score: 0.6,
            messages: 50,
            class: Stance::Republican,
        };
        assert!(matches!(build_zero_shot(&profile).variant, PersonaVariant::ZeroShot { class: Stance::Republican, .. }));
    }
}
