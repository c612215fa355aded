//! Tweet ingestion, thread reconstruction, user eligibility and text
//! processing.

mod markers;
mod text;

pub use markers::{extract_markers, is_emoji_grapheme, marker_tokens, MarkerCounts, MarkerTokens};
pub use text::{preprocess, tokenize, EntityLexicon, RuleTokenizer, StopWords, TokenizedDoc, Tokenizer};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

/// Default minimum number of authored tweets for an eligible user.
pub const DEFAULT_MIN_HISTORY: usize = 50;
/// Default character limit used by [`length_filter`].
pub const DEFAULT_LENGTH_LIMIT: usize = 280;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTweet {
    pub tweet_id: String,
    pub author_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub timestamp: DateTime<Utc>,
}

/// Display names and bios seen for an author, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub usernames: Vec<String>,
    pub bios: Vec<String>,
}

impl UserProfile {
    fn absorb(&mut self, username: Option<String>, bio: Option<String>) {
        for (value, list) in [(username, &mut self.usernames), (bio, &mut self.bios)] {
            if let Some(v) = value.filter(|v| !v.trim().is_empty()) {
                if !list.contains(&v) {
                    list.push(v);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub usernames: Vec<String>,
    pub bios: Vec<String>,
    /// Authored tweets ordered by `(timestamp, tweet_id)`.
    pub history: Vec<RawTweet>,
}

impl UserHistory {
    /// Tweets strictly older than `instant`, oldest first.
    pub fn before(&self, instant: DateTime<Utc>) -> &[RawTweet] {
        let end = self.history.partition_point(|t| t.timestamp < instant);
        &self.history[..end]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThreadError {
    #[error("reply {reply} does not answer parent {parent}")]
    NotAReply { parent: String, reply: String },
    #[error("agent reply targets {got}, thread parent is {expected}")]
    ParentMismatch { expected: String, got: String },
}

/// A parent tweet, the human reply to it and references to agent replies
/// generated for the same parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    /// Ancestors above `parent`, root first.
    pub context: Vec<RawTweet>,
    pub parent: RawTweet,
    pub human_reply: RawTweet,
    /// Cache keys of generation records answering `parent`.
    pub agent_replies: Vec<String>,
}

impl Thread {
    pub fn new(parent: RawTweet, human_reply: RawTweet) -> Result<Self, ThreadError> {
        if human_reply.parent_id.as_deref() != Some(parent.tweet_id.as_str()) {
            return Err(ThreadError::NotAReply {
                parent: parent.tweet_id,
                reply: human_reply.tweet_id,
            });
        }
        Ok(Self {
            context: Vec::new(),
            parent,
            human_reply,
            agent_replies: Vec::new(),
        })
    }

    pub fn with_context(mut self, context: Vec<RawTweet>) -> Self {
        self.context = context;
        self
    }

    pub fn attach_agent_reply(&mut self, target_parent: &str, record_key: String) -> Result<(), ThreadError> {
        if target_parent != self.parent.tweet_id {
            return Err(ThreadError::ParentMismatch {
                expected: self.parent.tweet_id.clone(),
                got: target_parent.to_string(),
            });
        }
        self.agent_replies.push(record_key);
        Ok(())
    }

    /// Context followed by the parent, oldest first.
    pub fn conversation(&self) -> impl Iterator<Item = &RawTweet> {
        self.context.iter().chain(std::iter::once(&self.parent))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_seen: usize,
    pub accepted: usize,
    pub rejected_duplicate: usize,
    pub rejected_malformed: usize,
    pub dangling_parents: usize,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.rejected_duplicate + self.rejected_malformed
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("store format error: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Skip malformed records and count them.
    #[default]
    Lenient,
    /// Abort on the first malformed record.
    Strict,
}

/// Immutable tweet store.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tweets: Vec<RawTweet>,
    index: HashMap<String, usize>,
    profiles: BTreeMap<String, UserProfile>,
    report: IngestReport,
}

struct ParsedRecord {
    tweet: RawTweet,
    username: Option<String>,
    bio: Option<String>,
}

fn id_field(obj: &serde_json::Map<String, Value>, name: &str) -> Result<Option<String>, String> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.is_empty() => Err(format!("empty `{name}`")),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(format!("`{name}` has unsupported type {other}")),
    }
}

fn parse_timestamp(v: &Value) -> Result<DateTime<Utc>, String> {
    match v {
        Value::String(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| format!("timestamp `{s}`: {e}")),
        Value::Number(n) => n
            .as_i64()
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .ok_or_else(|| format!("timestamp {n} out of range")),
        other => Err(format!("timestamp has unsupported type {other}")),
    }
}

fn parse_record(line: &str) -> Result<ParsedRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let tweet_id = id_field(obj, "tweet_id")?.ok_or("missing `tweet_id`")?;
    let author_id = id_field(obj, "author_id")?.ok_or("missing `author_id`")?;
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err("missing or non-string `text`".into()),
    };
    let parent_id = id_field(obj, "parent_id")?;
    let timestamp = parse_timestamp(obj.get("timestamp").ok_or("missing `timestamp`")?)?;
    let opt_str = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    Ok(ParsedRecord {
        tweet: RawTweet {
            tweet_id,
            author_id,
            text,
            parent_id,
            timestamp,
        },
        username: opt_str("username"),
        bio: opt_str("bio"),
    })
}

/// Reads line-delimited JSON records into a deduplicated corpus.
///
/// The first record with a given `tweet_id` wins; later ones are counted as
/// duplicates. Blank lines are ignored.
pub fn ingest_tweets(source: impl BufRead, strictness: Strictness) -> Result<Corpus, IngestError> {
    let mut builder = CorpusBuilder::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        builder.report.records_seen += 1;
        match parse_record(&line) {
            Ok(rec) => builder.add(rec.tweet, rec.username, rec.bio),
            Err(reason) => {
                if strictness == Strictness::Strict {
                    return Err(IngestError::Malformed { line: i + 1, reason });
                }
                warn!(line = i + 1, %reason, "skipping malformed record");
                builder.report.rejected_malformed += 1;
            }
        }
    }
    Ok(builder.finish())
}

#[derive(Default)]
struct CorpusBuilder {
    tweets: Vec<RawTweet>,
    index: HashMap<String, usize>,
    profiles: BTreeMap<String, UserProfile>,
    report: IngestReport,
}

impl CorpusBuilder {
    fn add(&mut self, tweet: RawTweet, username: Option<String>, bio: Option<String>) {
        if self.index.contains_key(&tweet.tweet_id) {
            self.report.rejected_duplicate += 1;
            return;
        }
        self.profiles
            .entry(tweet.author_id.clone())
            .or_default()
            .absorb(username, bio);
        self.index.insert(tweet.tweet_id.clone(), self.tweets.len());
        self.tweets.push(tweet);
        self.report.accepted += 1;
    }

    fn finish(mut self) -> Corpus {
        self.report.dangling_parents = self
            .tweets
            .iter()
            .filter(|t| t.parent_id.as_ref().is_some_and(|p| !self.index.contains_key(p)))
            .count();
        Corpus {
            tweets: self.tweets,
            index: self.index,
            profiles: self.profiles,
            report: self.report,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoredProfiles {
    report: IngestReport,
    profiles: BTreeMap<String, UserProfile>,
}

impl Corpus {
    /// Builds a corpus from already-parsed tweets (duplicates rejected).
    pub fn from_tweets(tweets: impl IntoIterator<Item = RawTweet>) -> Self {
        let mut b = CorpusBuilder::default();
        for t in tweets {
            b.report.records_seen += 1;
            b.add(t, None, None);
        }
        b.finish()
    }

    pub fn with_profiles(mut self, profiles: BTreeMap<String, UserProfile>) -> Self {
        self.profiles.extend(profiles);
        self
    }

    pub fn open(path: &Path, strictness: Strictness) -> Result<Self, IngestError> {
        ingest_tweets(BufReader::new(File::open(path)?), strictness)
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn report(&self) -> IngestReport {
        self.report
    }

    pub fn tweets(&self) -> &[RawTweet] {
        &self.tweets
    }

    pub fn get(&self, tweet_id: &str) -> Option<&RawTweet> {
        self.index.get(tweet_id).map(|&i| &self.tweets[i])
    }

    pub fn profile(&self, author_id: &str) -> Option<&UserProfile> {
        self.profiles.get(author_id)
    }

    /// Number of authored tweets per author.
    pub fn author_counts(&self) -> HashMap<&str, usize> {
        let mut counts = HashMap::new();
        for t in &self.tweets {
            *counts.entry(t.author_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Ancestors of `tweet` (excluding itself), root first, at most `max_depth`.
    pub fn ancestors(&self, tweet: &RawTweet, max_depth: usize) -> Vec<RawTweet> {
        let mut chain = Vec::new();
        let mut seen = HashSet::from([tweet.tweet_id.as_str()]);
        let mut cur = tweet;
        while chain.len() < max_depth {
            let Some(parent) = cur.parent_id.as_deref().and_then(|p| self.get(p)) else {
                break;
            };
            if !seen.insert(parent.tweet_id.as_str()) {
                break;
            }
            chain.push(parent.clone());
            cur = parent;
        }
        chain.reverse();
        chain
    }

    /// Threads for every reply whose parent resolves in the corpus, in
    /// corpus order. Replies to oneself are skipped.
    pub fn threads(&self, context_depth: usize) -> Vec<Thread> {
        self.tweets
            .iter()
            .filter_map(|reply| {
                let parent = self.get(reply.parent_id.as_deref()?)?;
                if parent.author_id == reply.author_id {
                    return None;
                }
                let t = Thread::new(parent.clone(), reply.clone()).ok()?;
                Some(t.with_context(self.ancestors(parent, context_depth)))
            })
            .collect()
    }

    /// Writes `tweets.jsonl` and `profiles.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("tweets.jsonl"))?);
        for t in &self.tweets {
            serde_json::to_writer(&mut w, t).map_err(|e| IngestError::Store(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let stored = StoredProfiles {
            report: self.report,
            profiles: self.profiles.clone(),
        };
        let f = File::create(dir.join("profiles.json"))?;
        serde_json::to_writer_pretty(f, &stored).map_err(|e| IngestError::Store(e.to_string()))?;
        Ok(())
    }

    /// Loads a store written by [`Corpus::save`].
    pub fn load(dir: &Path) -> Result<Self, IngestError> {
        let mut b = CorpusBuilder::default();
        let reader = BufReader::new(File::open(dir.join("tweets.jsonl"))?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: RawTweet = serde_json::from_str(&line).map_err(|e| IngestError::Store(e.to_string()))?;
            b.add(t, None, None);
        }
        let stored: StoredProfiles = serde_json::from_reader(File::open(dir.join("profiles.json"))?)
            .map_err(|e| IngestError::Store(e.to_string()))?;
        let mut corpus = b.finish();
        corpus.profiles = stored.profiles;
        corpus.report = stored.report;
        Ok(corpus)
    }
}

/// Users with at least `min_history` authored tweets, ordered by user id,
/// each history sorted by `(timestamp, tweet_id)`.
pub fn select_eligible_users(corpus: &Corpus, min_history: usize) -> Vec<UserHistory> {
    let mut by_author: BTreeMap<&str, Vec<&RawTweet>> = BTreeMap::new();
    for t in corpus.tweets() {
        by_author.entry(t.author_id.as_str()).or_default().push(t);
    }
    by_author
        .into_iter()
        .filter(|(_, tweets)| tweets.len() >= min_history)
        .map(|(user, mut tweets)| {
            tweets.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.tweet_id.cmp(&b.tweet_id)));
            let profile = corpus.profile(user).cloned().unwrap_or_default();
            UserHistory {
                user_id: user.to_string(),
                usernames: profile.usernames,
                bios: profile.bios,
                history: tweets.into_iter().cloned().collect(),
            }
        })
        .collect()
}

/// Anything with a text body that can be length-filtered.
pub trait HasText {
    fn text(&self) -> &str;
}

impl HasText for RawTweet {
    fn text(&self) -> &str {
        &self.text
    }
}

impl HasText for String {
    fn text(&self) -> &str {
        self
    }
}

impl HasText for &str {
    fn text(&self) -> &str {
        self
    }
}

impl<T: HasText> HasText for &T {
    fn text(&self) -> &str {
        (**self).text()
    }
}

/// Length in Unicode scalar values.
pub fn char_length(text: &str) -> usize {
    text.chars().count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthPartition<T> {
    pub kept: Vec<T>,
    pub anomalies: Vec<T>,
}

/// Splits items into those within `limit` characters (inclusive) and
/// overlength anomalies, preserving order within each side.
pub fn length_filter<T: HasText>(items: impl IntoIterator<Item = T>, limit: usize) -> LengthPartition<T> {
    let (kept, anomalies) = items
        .into_iter()
        .partition(|t| char_length(t.text()) <= limit);
    LengthPartition { kept, anomalies }
}
