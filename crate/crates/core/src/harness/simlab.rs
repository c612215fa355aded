//! Synthetic corpora with known ground truth.
//!
//! Each simulated user writes a timeline of `history + replies` tweets; the
//! last `replies` tweets answer distinct parent tweets written by anchor
//! accounts with too little history to be eligible. A marker with period `p`
//! appears in every `p`-th tweet of each timeline, so any window of
//! consecutive tweets whose length is a multiple of `p` contains it in
//! exactly a `1/p` share of tweets. Few-Shot samples (the 30 tweets before a
//! reply) and the human replies therefore carry known marker rates.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RawTweet, UserProfile};
use crate::hashing::derive_seed;
use crate::metrics::{normalize_marker, MarkerKind};
use crate::stance::{LexiconStance, Stance};
use crate::toxscore::LexicalToxicity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMarker {
    pub token: String,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimlabConfig {
    pub users: usize,
    /// Tweets per user before the first reply.
    pub history: usize,
    /// Replies per user, forming the end of the timeline.
    pub replies: usize,
    pub seed: u64,
    pub markers: Vec<SimMarker>,
    /// Probability a tweet carries a partisan phrase matching the user's side.
    pub partisan_rate: f64,
    /// Probability a tweet carries a phrase for the other side.
    pub cross_rate: f64,
    /// Toxic terms per tweet are uniform on `min_toxic_terms..=max_toxic_terms`.
    pub min_toxic_terms: usize,
    pub max_toxic_terms: usize,
    /// Parent tweets per anchor account.
    pub parents_per_anchor: usize,
}

impl Default for SimlabConfig {
    fn default() -> Self {
        Self {
            users: 30,
            history: 60,
            replies: 30,
            seed: 0,
            markers: vec![
                SimMarker { token: "#Resist".into(), period: 10 },
                SimMarker { token: "#ElectionNight".into(), period: 10 },
                SimMarker { token: "🌈".into(), period: 10 },
                SimMarker { token: "🔥".into(), period: 10 },
                SimMarker { token: "#Debate".into(), period: 15 },
                SimMarker { token: "@newsdesk".into(), period: 30 },
            ],
            partisan_rate: 0.5,
            cross_rate: 0.05,
            min_toxic_terms: 0,
            max_toxic_terms: 2,
            parents_per_anchor: 40,
        }
    }
}

/// Ground truth emitted with a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimlabTruth {
    pub users: usize,
    pub replies: usize,
    pub tweets: usize,
    /// Designed side per user, before stance classification.
    pub designed_class: BTreeMap<String, Stance>,
    /// Exact share of human replies containing each normalized marker.
    pub human_reply_rate: BTreeMap<String, f64>,
    /// Exact share of each user's 30 tweets before any reply containing each marker.
    pub few_shot_rate: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct Simlab {
    pub corpus: Corpus,
    pub truth: SimlabTruth,
}

impl Simlab {
    /// Line-delimited JSON in the ingest format, with each author's first
    /// username and bio attached to every tweet.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in self.corpus.tweets() {
            let mut v = serde_json::to_value(t).expect("tweet serializes");
            if let Some(p) = self.corpus.profile(&t.author_id) {
                if let Some(u) = p.usernames.first() {
                    v["username"] = u.clone().into();
                }
                if let Some(b) = p.bios.first() {
                    v["bio"] = b.clone().into();
                }
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

const SYLLABLES: [&str; 20] = [
    "ba", "ko", "ri", "mel", "tan", "su", "vo", "lin", "de", "pra", "gu", "ne", "sol", "fi", "ra", "tor", "mi", "ca",
    "len", "do",
];

fn marker_kind(token: &str) -> MarkerKind {
    if token.starts_with('#') {
        MarkerKind::Hashtag
    } else if token.starts_with('@') {
        MarkerKind::Mention
    } else {
        MarkerKind::Emoji
    }
}

/// Pseudo-words that collide with no stance phrase and no toxic term.
fn vocabulary(stance: &LexiconStance, toxicity: &LexicalToxicity) -> Vec<String> {
    let mut words = Vec::new();
    for a in SYLLABLES {
        for b in SYLLABLES {
            let w = format!("{a}{b}");
            if !stance.mentions_word(&w) && toxicity.weight(&w).is_none() {
                words.push(w);
            }
        }
    }
    words
}

pub fn generate(cfg: &SimlabConfig) -> Result<Simlab, String> {
    if cfg.history < 30 {
        return Err("history must hold at least 30 tweets".into());
    }
    if cfg.min_toxic_terms > cfg.max_toxic_terms {
        return Err("min_toxic_terms exceeds max_toxic_terms".into());
    }
    if cfg.parents_per_anchor == 0 || cfg.parents_per_anchor >= 50 {
        return Err("parents_per_anchor must be in 1..50 so anchors stay ineligible".into());
    }
    for m in &cfg.markers {
        if m.period == 0 {
            return Err(format!("marker {} has period 0", m.token));
        }
    }
    let stance = LexiconStance::builtin();
    let toxicity = LexicalToxicity::builtin();
    let vocab = vocabulary(&stance, &toxicity);
    let toxic_terms: Vec<String> = toxicity.terms().into_iter().map(|(t, _)| t.to_string()).collect();
    let dem: Vec<&str> = stance.rules().iter().filter(|(_, s)| *s == Stance::Democrat).map(|(p, _)| p.as_str()).collect();
    let rep: Vec<&str> = stance.rules().iter().filter(|(_, s)| *s == Stance::Republican).map(|(p, _)| p.as_str()).collect();

    let start: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 9, 1, 0, 0, 0).unwrap();
    let timeline = cfg.history + cfg.replies;
    let mut tweets = Vec::new();
    let mut profiles = BTreeMap::new();
    let mut designed_class = BTreeMap::new();
    let mut parent_no = 0usize;

    for u in 0..cfg.users {
        let user_id = format!("sim{u:05}");
        let side = Stance::ALL[u % 3];
        designed_class.insert(user_id.clone(), side);
        profiles.insert(
            user_id.clone(),
            UserProfile {
                usernames: vec![format!("user_{u}")],
                bios: vec![format!("simulated {} voter", side.name().to_lowercase())],
            },
        );
        let mut rng = ChaCha8Rng::from_seed(derive_seed(cfg.seed, &["simlab", "user"], &[u as u64]));
        let own_words: Vec<&String> = (0..40).map(|_| vocab.choose(&mut rng).expect("vocabulary")).collect();
        for i in 0..timeline {
            let ts = start + Duration::minutes((i * 10_000 + u) as i64);
            let mut parts: Vec<String> = Vec::new();
            let n_words = rng.random_range(5..=12);
            for _ in 0..n_words {
                parts.push(own_words.choose(&mut rng).expect("words").to_string());
            }
            let (own, other) = match side {
                Stance::Democrat => (&dem, &rep),
                Stance::Republican => (&rep, &dem),
                Stance::Neutral => (&dem, &rep),
            };
            let (p_own, p_other) = match side {
                Stance::Neutral => (cfg.cross_rate * 2.0, cfg.cross_rate * 2.0),
                _ => (cfg.partisan_rate, cfg.cross_rate),
            };
            let roll: f64 = rng.random();
            if roll < p_own {
                parts.push(own.choose(&mut rng).expect("phrases").to_string());
            } else if roll < p_own + p_other {
                parts.push(other.choose(&mut rng).expect("phrases").to_string());
            }
            for _ in 0..rng.random_range(cfg.min_toxic_terms..=cfg.max_toxic_terms) {
                parts.push(toxic_terms.choose(&mut rng).expect("terms").clone());
            }
            for (k, m) in cfg.markers.iter().enumerate() {
                if (i + u + k) % m.period == 0 {
                    parts.push(m.token.clone());
                }
            }
            let is_reply = i >= cfg.history;
            let parent_id = is_reply.then(|| {
                let anchor = parent_no / cfg.parents_per_anchor;
                let pid = format!("par{parent_no:07}");
                tweets.push(RawTweet {
                    tweet_id: pid.clone(),
                    author_id: format!("anchor{anchor:05}"),
                    text: format!("what do you think about {} today", vocab[parent_no % vocab.len()]),
                    parent_id: None,
                    timestamp: ts - Duration::seconds(30),
                });
                parent_no += 1;
                pid
            });
            tweets.push(RawTweet {
                tweet_id: format!("{user_id}-{i:05}"),
                author_id: user_id.clone(),
                text: parts.join(" "),
                parent_id,
                timestamp: ts,
            });
        }
    }

    let rate = |window: std::ops::Range<usize>, u: usize, k: usize, period: usize| -> f64 {
        window.clone().filter(|i| (i + u + k) % period == 0).count() as f64 / window.len() as f64
    };
    let mut human_reply_rate = BTreeMap::new();
    let mut few_shot_rate = BTreeMap::new();
    for (k, m) in cfg.markers.iter().enumerate() {
        let key = normalize_marker(marker_kind(&m.token), &m.token);
        let (mut hits, mut few) = (0.0, 0.0);
        for u in 0..cfg.users {
            hits += rate(cfg.history..timeline, u, k, m.period) * cfg.replies as f64;
            few += rate(cfg.history - 30..cfg.history, u, k, m.period);
        }
        let total = (cfg.users * cfg.replies).max(1) as f64;
        human_reply_rate.insert(key.clone(), hits / total);
        few_shot_rate.insert(key, few / cfg.users.max(1) as f64);
    }

    let n_tweets = tweets.len();
    let corpus = Corpus::from_tweets(tweets).with_profiles(profiles);
    Ok(Simlab {
        corpus,
        truth: SimlabTruth {
            users: cfg.users,
            replies: cfg.users * cfg.replies,
            tweets: n_tweets,
            designed_class,
            human_reply_rate,
            few_shot_rate,
        },
    })
}
