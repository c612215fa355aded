use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use super::{Stance, StanceError};
use crate::hashing::sha256_hex;
use crate::http::{JsonClient, RetryPolicy};

const DEFAULT_LEXICON: &str = include_str!("../../data/stance_lexicon.tsv");

/// A per-message stance classifier. Human and agent replies both go through
/// this one interface.
pub trait StanceBackend: Send + Sync {
    /// Backend identity, including a version or content digest.
    fn name(&self) -> String;
    fn classify(&self, text: &str) -> Result<Stance, StanceError>;
}

pub fn classify_stance(text: &str, backend: &dyn StanceBackend) -> Result<Stance, StanceError> {
    backend.classify(text)
}

/// Classifies `texts` with at most `workers` concurrent calls. Output order
/// matches input order regardless of scheduling.
pub fn classify_batch(
    texts: &[&str],
    backend: &dyn StanceBackend,
    workers: usize,
) -> Vec<Result<Stance, StanceError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| texts.par_iter().map(|t| backend.classify(t)).collect())
}

/// Phrase-lexicon classifier.
///
/// Each rule is a phrase with a label of -1 or +1. Phrases match
/// case-insensitively on word boundaries. The label is the sign of
/// (pro-Republican matches - pro-Democrat matches); a text with no matching
/// support phrase, or balanced support, is Neutral.
#[derive(Debug, Clone)]
pub struct LexiconStance {
    rules: Vec<(String, Stance)>,
    digest: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn find_phrase(haystack: &str, phrase: &str) -> usize {
    let mut count = 0;
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            count += 1;
            from = end;
        } else {
            from = start + phrase.chars().next().map_or(1, char::len_utf8);
        }
    }
    count
}

impl LexiconStance {
    /// Parses `phrase<TAB>label` lines. Blank lines and `//` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, StanceError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("//") {
                continue;
            }
            let (phrase, label) = line.split_once('\t').ok_or_else(|| StanceError::Lexicon {
                line: i + 1,
                reason: "expected `phrase<TAB>label`".into(),
            })?;
            let label: i64 = label.trim().parse().map_err(|_| StanceError::Lexicon {
                line: i + 1,
                reason: format!("label `{label}` is not an integer"),
            })?;
            let stance = Stance::from_value(label).map_err(|_| StanceError::Lexicon {
                line: i + 1,
                reason: format!("label {label} not in {{-1, 0, 1}}"),
            })?;
            let phrase = phrase.trim().to_lowercase();
            if phrase.is_empty() {
                return Err(StanceError::Lexicon {
                    line: i + 1,
                    reason: "empty phrase".into(),
                });
            }
            if stance != Stance::Neutral {
                rules.push((phrase, stance));
            }
        }
        rules.sort();
        rules.dedup();
        let canonical: Vec<String> = rules.iter().map(|(p, s)| format!("{p}\t{}", s.value())).collect();
        Ok(Self {
            digest: sha256_hex(canonical.join("\n")),
            rules,
        })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled stance lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, StanceError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn rules(&self) -> &[(String, Stance)] {
        &self.rules
    }

    /// Rules matching `text`, with match counts.
    pub fn matches(&self, text: &str) -> Vec<(&str, Stance, usize)> {
        let lower = text.to_lowercase();
        self.rules
            .iter()
            .filter_map(|(p, s)| {
                let n = find_phrase(&lower, p);
                (n > 0).then_some((p.as_str(), *s, n))
            })
            .collect()
    }

    /// First rule for `side`, used to realize a stance in synthetic text.
    pub fn canonical_phrase(&self, side: Stance) -> Option<&str> {
        self.rules.iter().find(|(_, s)| *s == side).map(|(p, _)| p.as_str())
    }

    /// True if `word` (lowercased) occurs inside any rule phrase.
    pub fn mentions_word(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.rules.iter().any(|(p, _)| find_phrase(p, &w) > 0)
    }

    pub fn label(&self, text: &str) -> Stance {
        let balance: i64 = self
            .matches(text)
            .iter()
            .map(|(_, s, n)| s.value() as i64 * *n as i64)
            .sum();
        match balance.signum() {
            1 => Stance::Republican,
            -1 => Stance::Democrat,
            _ => Stance::Neutral,
        }
    }
}

impl StanceBackend for LexiconStance {
    fn name(&self) -> String {
        format!("lexicon@{}", &self.digest[..12])
    }

    fn classify(&self, text: &str) -> Result<Stance, StanceError> {
        Ok(self.label(text))
    }
}

/// Remote classifier: `POST {"text": ...}` returns `{"label": -1|0|1}`.
#[derive(Debug)]
pub struct RemoteStance {
    url: String,
    model: String,
    client: JsonClient,
}

#[derive(Deserialize)]
struct RemoteLabel {
    label: i64,
}

impl RemoteStance {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        token: Option<String>,
        timeout: Duration,
        requests_per_second: f64,
        retry: RetryPolicy,
    ) -> Self {
        let mut client = JsonClient::new(timeout, requests_per_second, retry);
        if let Some(t) = token {
            client = client.with_header("Authorization", format!("Bearer {t}"));
        }
        Self {
            url: url.into(),
            model: model.into(),
            client,
        }
    }
}

impl StanceBackend for RemoteStance {
    fn name(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn classify(&self, text: &str) -> Result<Stance, StanceError> {
        let reply = self.client.post_json::<RemoteLabel>(&self.url, &json!({ "text": text }))?;
        Stance::from_value(reply.value.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        let lex = LexiconStance::builtin();
        assert_eq!(lex.label("I support Trump 2024"), Stance::Republican);
        assert_eq!(lex.label("nice weather today"), Stance::Neutral);
        assert_eq!(lex.label("Vote Kamala Harris!"), Stance::Democrat);
    }

    #[test]
    fn balanced_support_is_neutral() {
        let lex = LexiconStance::builtin();
        assert_eq!(lex.label("vote trump or vote harris, whatever"), Stance::Neutral);
        assert_eq!(lex.label("vote trump, vote trump, vote harris"), Stance::Republican);
    }

    #[test]
    fn phrases_need_word_boundaries() {
        let lex = LexiconStance::parse("maga\t1\n").unwrap();
        assert_eq!(lex.label("#MAGA forever"), Stance::Republican);
        assert_eq!(lex.label("magazine rack"), Stance::Neutral);
    }

    #[test]
    fn mention_of_a_candidate_is_not_support() {
        let lex = LexiconStance::builtin();
        assert_eq!(lex.label("Trump held a rally in Ohio"), Stance::Neutral);
        assert_eq!(lex.label("Harris spoke in Atlanta"), Stance::Neutral);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = LexiconStance::parse("ok\t1\nbroken line\n").unwrap_err();
        assert!(matches!(err, StanceError::Lexicon { line: 2, .. }));
        let err = LexiconStance::parse("x\t5\n").unwrap_err();
        assert!(matches!(err, StanceError::Lexicon { line: 1, .. }));
    }

    #[test]
    fn digest_ignores_rule_order() {
        let a = LexiconStance::parse("a b\t1\nc\t-1\n").unwrap();
        let b = LexiconStance::parse("c\t-1\na b\t1\n").unwrap();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn batch_preserves_order_across_worker_counts() {
        let lex = LexiconStance::builtin();
        let texts = ["vote blue", "hello", "maga", "vote red", "trump 2024", "harris walz"];
        let one: Vec<_> = classify_batch(&texts, &lex, 1).into_iter().map(Result::unwrap).collect();
        let many: Vec<_> = classify_batch(&texts, &lex, 4).into_iter().map(Result::unwrap).collect();
        assert_eq!(one, many);
        assert_eq!(one[0], Stance::Democrat);
        assert_eq!(one[2], Stance::Republican);
    }
}
