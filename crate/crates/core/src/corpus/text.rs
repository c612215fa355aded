//! Preprocessing and tokenization for lexical analysis.
//!
//! Stages, in order:
//! 1. multiword entities from the lexicon are merged into single tokens,
//! 2. URLs, e-mail addresses and hashtags are dropped,
//! 3. the remaining text is split into Unicode words (UAX #29), which drops
//!    punctuation, symbols and emoji,
//! 4. stop words are removed (analysis tokenizer and [`preprocess`] only).
//!
//! Entity tokens keep their exact surface form, so `"U.S."` and
//! `"United States"` stay distinct types.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;
use std::{fs, io};

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::hashing::sha256_hex;

const ENGLISH_STOP_WORDS: &str = include_str!("../../data/stopwords_en.txt");
const DEFAULT_ENTITIES: &str = include_str!("../../data/entities_en.txt");

/// Tokens of one document together with its type and token counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub tokens: Vec<String>,
    pub num_types: usize,
    pub num_tokens: usize,
}

impl TokenizedDoc {
    pub fn new(tokens: Vec<String>) -> Self {
        let num_types = tokens.iter().collect::<HashSet<_>>().len();
        let num_tokens = tokens.len();
        Self {
            tokens,
            num_types,
            num_tokens,
        }
    }

    /// Concatenation of several documents into one bag of tokens.
    pub fn concat<'a>(docs: impl IntoIterator<Item = &'a TokenizedDoc>) -> Self {
        Self::new(docs.into_iter().flat_map(|d| d.tokens.iter().cloned()).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.num_tokens == 0
    }
}

fn lines_of(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with("//"))
}

/// Case-insensitive stop-word set.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
    digest: String,
}

impl StopWords {
    pub fn from_lines(text: &str) -> Self {
        let mut entries: Vec<String> = lines_of(text).map(|l| l.trim().to_lowercase()).collect();
        entries.sort();
        entries.dedup();
        let digest = sha256_hex(entries.join("\n"));
        Self {
            words: entries.into_iter().collect(),
            digest,
        }
    }

    /// The English list shipped with the crate.
    pub fn english() -> Self {
        static LIST: OnceLock<StopWords> = OnceLock::new();
        LIST.get_or_init(|| Self::from_lines(ENGLISH_STOP_WORDS)).clone()
    }

    pub fn empty() -> Self {
        Self::from_lines("")
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::from_lines(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
            // typographic apostrophes are common in tweets
            || (word.contains('\u{2019}') && self.words.contains(&word.replace('\u{2019}', "'").to_lowercase()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Digest of the sorted, lowercased entries.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// Multiword surface forms that are emitted as single tokens.
#[derive(Debug, Clone, Default)]
pub struct EntityLexicon {
    by_first_char: HashMap<char, Vec<String>>,
    digest: String,
}

impl EntityLexicon {
    pub fn from_lines(text: &str) -> Self {
        Self::from_entries(lines_of(text).map(|l| l.trim().to_string()))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = entries.into_iter().filter(|e| !e.is_empty()).collect();
        all.sort();
        all.dedup();
        let digest = sha256_hex(all.join("\n"));
        let mut by_first_char: HashMap<char, Vec<String>> = HashMap::new();
        for e in all {
            let c = e.chars().next().expect("non-empty entry");
            by_first_char.entry(c).or_default().push(e);
        }
        for v in by_first_char.values_mut() {
            // longest match wins
            v.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Self {
            by_first_char,
            digest,
        }
    }

    pub fn empty() -> Self {
        Self::from_entries(Vec::new())
    }

    /// Entities shipped with the crate (U.S. political discourse).
    pub fn default_english() -> Self {
        Self::from_lines(DEFAULT_ENTITIES)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::from_lines(&fs::read_to_string(path)?))
    }

    pub fn is_empty(&self) -> bool {
        self.by_first_char.is_empty()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Longest entry matching at byte offset `at` on word boundaries.
    fn match_at<'a>(&'a self, text: &str, at: usize) -> Option<&'a str> {
        let rest = &text[at..];
        let first = rest.chars().next()?;
        let candidates = self.by_first_char.get(&first)?;
        if let Some(prev) = text[..at].chars().next_back() {
            if is_word_char(prev) || prev == '#' || prev == '@' {
                return None;
            }
        }
        candidates.iter().map(String::as_str).find(|e| {
            rest.starts_with(e)
                && rest[e.len()..]
                    .chars()
                    .next()
                    .is_none_or(|next| !is_word_char(next) || !e.chars().next_back().is_some_and(is_word_char))
        })
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn removal_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"(?i)(?:https?://|ftp://|www\.)\S+",
            r"|[\p{L}\p{N}._%+\-]+@[\p{L}\p{N}\-]+(?:\.[\p{L}\p{N}\-]+)+",
            r"|[#＃][\p{L}\p{M}\p{N}_]+",
        ))
        .expect("static regex")
    })
}

fn push_words(chunk: &str, out: &mut Vec<String>) {
    let cleaned = removal_pattern().replace_all(chunk, " ");
    // a combining mark after a space can glue two words across the space
    out.extend(
        cleaned
            .unicode_words()
            .flat_map(str::split_whitespace)
            .filter(|w| w.chars().any(char::is_alphanumeric))
            .map(str::to_string),
    );
}

/// Entity merge, URL/e-mail/hashtag removal and punctuation-free word
/// segmentation. Stop words are kept.
pub fn tokenize(text: &str, lexicon: &EntityLexicon) -> TokenizedDoc {
    TokenizedDoc::new(segment(text, lexicon))
}

fn segment(text: &str, lexicon: &EntityLexicon) -> Vec<String> {
    let mut out = Vec::new();
    if lexicon.is_empty() {
        push_words(text, &mut out);
        return out;
    }
    let mut chunk_start = 0;
    let mut i = 0;
    while i < text.len() {
        if let Some(entity) = lexicon.match_at(text, i) {
            push_words(&text[chunk_start..i], &mut out);
            out.push(entity.to_string());
            i += entity.len();
            chunk_start = i;
        } else {
            i += text[i..].chars().next().map_or(1, char::len_utf8);
        }
    }
    push_words(&text[chunk_start..], &mut out);
    out
}

/// Removes URLs, e-mail addresses, punctuation, hashtags and English stop
/// words, returning the remaining words joined by single spaces.
pub fn preprocess(text: &str) -> String {
    let stop = StopWords::english();
    segment(text, &EntityLexicon::empty())
        .into_iter()
        .filter(|w| !stop.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pluggable tokenizer used by the lexical-diversity analysis.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> TokenizedDoc;
}

/// Deterministic rule-based analysis tokenizer: [`tokenize`] followed by
/// stop-word removal.
#[derive(Debug, Clone)]
pub struct RuleTokenizer {
    lexicon: EntityLexicon,
    stop_words: StopWords,
}

impl RuleTokenizer {
    pub fn new(lexicon: EntityLexicon, stop_words: StopWords) -> Self {
        Self {
            lexicon,
            stop_words,
        }
    }

    pub fn english() -> Self {
        Self::new(EntityLexicon::default_english(), StopWords::english())
    }

    pub fn lexicon(&self) -> &EntityLexicon {
        &self.lexicon
    }

    pub fn stop_words(&self) -> &StopWords {
        &self.stop_words
    }
}

impl Tokenizer for RuleTokenizer {
    fn name(&self) -> &str {
        "rule-uax29"
    }

    fn tokenize(&self, text: &str) -> TokenizedDoc {
        TokenizedDoc::new(
            segment(text, &self.lexicon)
                .into_iter()
                .filter(|t| !self.stop_words.contains(t))
                .collect(),
        )
    }
}
