use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::MarkerTokens;
use crate::stance::LeaningClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    Emoji,
    Hashtag,
    Mention,
}

impl MarkerKind {
    pub const ALL: [MarkerKind; 3] = [MarkerKind::Emoji, MarkerKind::Hashtag, MarkerKind::Mention];

    pub fn name(self) -> &'static str {
        match self {
            MarkerKind::Emoji => "emoji",
            MarkerKind::Hashtag => "hashtag",
            MarkerKind::Mention => "mention",
        }
    }

    fn tokens(self, m: &MarkerTokens) -> &[String] {
        match self {
            MarkerKind::Emoji => &m.emojis,
            MarkerKind::Hashtag => &m.hashtags,
            MarkerKind::Mention => &m.mentions,
        }
    }
}

/// Hashtags and mentions compare case-insensitively; emoji compare as-is
/// apart from the emoji presentation selector.
pub fn normalize_marker(kind: MarkerKind, token: &str) -> String {
    match kind {
        MarkerKind::Emoji => token.replace('\u{FE0F}', ""),
        MarkerKind::Hashtag => token.replace('＃', "#").to_lowercase(),
        MarkerKind::Mention => token.to_lowercase(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExaggerationRow {
    pub token: String,
    pub kind: MarkerKind,
    pub class: Option<LeaningClass>,
    pub human_tweets: usize,
    pub llm_tweets: usize,
    pub human_rel_freq: f64,
    pub llm_rel_freq: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExaggerationTable {
    pub kind: MarkerKind,
    pub class: Option<LeaningClass>,
    pub human_corpus: usize,
    pub llm_corpus: usize,
    /// Sorted by descending ratio, then token.
    pub rows: Vec<ExaggerationRow>,
}

impl ExaggerationTable {
    pub fn get(&self, token: &str) -> Option<&ExaggerationRow> {
        let t = normalize_marker(self.kind, token);
        self.rows.iter().find(|r| r.token == t)
    }
}

/// Number of tweets containing each token at least once.
fn document_frequency(corpus: &[MarkerTokens], kind: MarkerKind) -> BTreeMap<String, usize> {
    let mut df = BTreeMap::new();
    for tweet in corpus {
        let distinct: BTreeSet<String> = kind.tokens(tweet).iter().map(|t| normalize_marker(kind, t)).collect();
        for t in distinct {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    df
}

/// Ratio of the fraction of LLM tweets containing each token to the fraction
/// of human tweets containing it, over tokens present in both corpora.
pub fn exaggeration_ratios(
    human: &[MarkerTokens],
    llm: &[MarkerTokens],
    kind: MarkerKind,
    class: Option<LeaningClass>,
) -> Result<ExaggerationTable, MetricError> {
    if human.is_empty() || llm.is_empty() {
        return Err(MetricError::Empty);
    }
    let h = document_frequency(human, kind);
    let l = document_frequency(llm, kind);
    let (nh, nl) = (human.len() as f64, llm.len() as f64);
    let mut rows: Vec<ExaggerationRow> = h
        .iter()
        .filter_map(|(token, &hc)| {
            let &lc = l.get(token)?;
            let (hf, lf) = (hc as f64 / nh, lc as f64 / nl);
            Some(ExaggerationRow {
                token: token.clone(),
                kind,
                class,
                human_tweets: hc,
                llm_tweets: lc,
                human_rel_freq: hf,
                llm_rel_freq: lf,
                ratio: lf / hf,
            })
        })
        .collect();
    rows.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.token.cmp(&b.token)));
    Ok(ExaggerationTable {
        kind,
        class,
        human_corpus: human.len(),
        llm_corpus: llm.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::marker_tokens;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Vec<MarkerTokens> {
        texts.iter().map(|t| marker_tokens(t)).collect()
    }

    #[test]
    fn equal_frequencies_give_one() {
        let h = corpus(&["#vote now", "hi", "#Vote again", "x"]);
        let l = corpus(&["#VOTE", "y"]);
        let t = exaggeration_ratios(&h, &l, MarkerKind::Hashtag, None).unwrap();
        assert_eq!(t.get("#vote").unwrap().ratio, 1.0);
    }

    #[test]
    fn rainbow_scale() {
        let mut h = vec!["plain"; 1000];
        h[0] = "🌈 pride";
        let mut l = vec!["plain"; 1000];
        for t in l.iter_mut().take(20) {
            *t = "🌈🌈 love";
        }
        let t = exaggeration_ratios(&corpus(&h), &corpus(&l), MarkerKind::Emoji, None).unwrap();
        let row = t.get("🌈").unwrap();
        assert_eq!((row.human_rel_freq, row.llm_rel_freq), (0.001, 0.02));
        assert!((row.ratio - 20.0).abs() < 1e-12);
    }

    #[test]
    fn llm_only_tokens_are_excluded() {
        let t = exaggeration_ratios(&corpus(&["#a"]), &corpus(&["#a #b"]), MarkerKind::Hashtag, None).unwrap();
        assert!(t.get("#b").is_none());
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(exaggeration_ratios(&[], &corpus(&["#a"]), MarkerKind::Hashtag, None).is_err());
    }

    proptest! {
        #[test]
        fn duplication_leaves_ratios_unchanged(
            h in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..4), 1..40),
            l in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..4), 1..40),
            fh in 1usize..4, fl in 1usize..4,
        ) {
            let build = |v: &Vec<Vec<u8>>| -> Vec<MarkerTokens> { v.iter().map(|tags| MarkerTokens {
                hashtags: tags.iter().map(|t| format!("#t{t}")).collect(), ..Default::default()
            }).collect() };
            let (hc, lc) = (build(&h), build(&l));
            let base = exaggeration_ratios(&hc, &lc, MarkerKind::Hashtag, None).unwrap();
            let rep = |c: &Vec<MarkerTokens>, f: usize| -> Vec<MarkerTokens> { c.iter().flat_map(|m| std::iter::repeat_n(m.clone(), f)).collect() };
            let scaled = exaggeration_ratios(&rep(&hc, fh), &rep(&lc, fl), MarkerKind::Hashtag, None).unwrap();
            prop_assert_eq!(base.rows.len(), scaled.rows.len());
            for r in &base.rows {
                let s = scaled.get(&r.token).unwrap();
                prop_assert!((r.ratio - s.ratio).abs() <= 1e-12 * r.ratio);
                prop_assert!(r.human_rel_freq > 0.0 && r.human_rel_freq <= 1.0);
                prop_assert!(r.llm_rel_freq > 0.0 && r.llm_rel_freq <= 1.0);
            }
        }
    }
}
