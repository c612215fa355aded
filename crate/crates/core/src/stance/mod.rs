//! Per-message stance labels, user leaning scores and classes, and the
//! conditional leaning distribution of generated replies.

mod backend;

pub use backend::{classify_batch, classify_stance, LexiconStance, RemoteStance, StanceBackend};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::PostError;

/// Half-width of the Neutral bin for leaning classes.
pub const NEUTRAL_BAND: f64 = 0.25;

/// Stance of a message, or the leaning class of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Stance {
    /// Pro-Democrat (-1).
    Democrat,
    /// No explicit support phrase (0).
    Neutral,
    /// Pro-Republican (+1).
    Republican,
}

/// Leaning class of a user, using the same three values as message stance.
pub type LeaningClass = Stance;

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::Democrat, Stance::Neutral, Stance::Republican];

    pub fn value(self) -> i8 {
        match self {
            Stance::Democrat => -1,
            Stance::Neutral => 0,
            Stance::Republican => 1,
        }
    }

    /// Position in `ALL`, used for matrix indexing.
    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_value(v: i64) -> Result<Self, StanceError> {
        match v {
            -1 => Ok(Stance::Democrat),
            0 => Ok(Stance::Neutral),
            1 => Ok(Stance::Republican),
            other => Err(StanceError::InvalidLabel(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stance::Democrat => "Democrat",
            Stance::Neutral => "Neutral",
            Stance::Republican => "Republican",
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Stance> for i8 {
    fn from(s: Stance) -> i8 {
        s.value()
    }
}

impl TryFrom<i8> for Stance {
    type Error = StanceError;
    fn try_from(v: i8) -> Result<Self, Self::Error> {
        Stance::from_value(v as i64)
    }
}

#[derive(Debug, Error)]
pub enum StanceError {
    #[error("stance label must be -1, 0 or +1, got {0}")]
    InvalidLabel(i64),
    #[error("leaning score needs at least one label")]
    EmptyLabels,
    #[error("leaning score {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("{got} scored messages, at least {required} required")]
    TooFewMessages { got: usize, required: usize },
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("stance backend: {0}")]
    Backend(#[from] PostError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl StanceError {
    /// Failures that leave a message unscored rather than aborting the run.
    pub fn is_unscored(&self) -> bool {
        matches!(self, StanceError::Backend(PostError::Exhausted { .. }))
    }
}

/// Arithmetic mean of the stance values.
pub fn leaning_score(labels: &[Stance]) -> Result<f64, StanceError> {
    if labels.is_empty() {
        return Err(StanceError::EmptyLabels);
    }
    let sum: i64 = labels.iter().map(|s| s.value() as i64).sum();
    Ok(sum as f64 / labels.len() as f64)
}

/// Bins a leaning score: below -0.25 Democrat, above +0.25 Republican,
/// Neutral on the closed band in between.
pub fn bin_leaning(score: f64) -> Result<LeaningClass, StanceError> {
    bin_leaning_with(score, NEUTRAL_BAND)
}

/// Binning with a custom Neutral half-width.
pub fn bin_leaning_with(score: f64, band: f64) -> Result<LeaningClass, StanceError> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(StanceError::OutOfRange(score));
    }
    Ok(if score < -band {
        Stance::Democrat
    } else if score > band {
        Stance::Republican
    } else {
        Stance::Neutral
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaningProfile {
    pub user_id: String,
    /// Mean stance over `messages` scored tweets.
    pub score: f64,
    pub messages: usize,
    pub class: LeaningClass,
}

impl LeaningProfile {
    pub fn estimate(user_id: impl Into<String>, labels: &[Stance], min_messages: usize) -> Result<Self, StanceError> {
        Self::estimate_with(user_id, labels, min_messages, NEUTRAL_BAND)
    }

    pub fn estimate_with(
        user_id: impl Into<String>,
        labels: &[Stance],
        min_messages: usize,
        band: f64,
    ) -> Result<Self, StanceError> {
        if labels.len() < min_messages.max(1) {
            return Err(StanceError::TooFewMessages {
                got: labels.len(),
                required: min_messages.max(1),
            });
        }
        let score = leaning_score(labels)?;
        Ok(Self {
            user_id: user_id.into(),
            score,
            messages: labels.len(),
            class: bin_leaning_with(score, band)?,
        })
    }
}

/// Counts of (user class, reply stance) pairs and the derived row-conditional
/// probabilities.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaningTransitionMatrix {
    /// `counts[user class][reply stance]`, both indexed by [`Stance::index`].
    pub counts: [[u64; 3]; 3],
}

impl LeaningTransitionMatrix {
    pub fn add(&mut self, user_class: LeaningClass, reply: Stance) {
        self.counts[user_class.index()][reply.index()] += 1;
    }

    pub fn row_total(&self, user_class: LeaningClass) -> u64 {
        self.counts[user_class.index()].iter().sum()
    }

    /// False for rows with no observations; their probabilities are all zero.
    pub fn row_defined(&self, user_class: LeaningClass) -> bool {
        self.row_total(user_class) > 0
    }

    pub fn probability(&self, user_class: LeaningClass, reply: Stance) -> f64 {
        let total = self.row_total(user_class);
        if total == 0 {
            0.0
        } else {
            self.counts[user_class.index()][reply.index()] as f64 / total as f64
        }
    }

    pub fn probabilities(&self) -> [[f64; 3]; 3] {
        let mut p = [[0.0; 3]; 3];
        for r in Stance::ALL {
            for c in Stance::ALL {
                p[r.index()][c.index()] = self.probability(r, c);
            }
        }
        p
    }

    pub fn merge(&mut self, other: &Self) {
        for r in 0..3 {
            for c in 0..3 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
    }
}

/// Row-conditional distribution of reply stance given the user's class.
pub fn conditional_leaning_distribution(
    pairs: impl IntoIterator<Item = (LeaningClass, Stance)>,
) -> LeaningTransitionMatrix {
    let mut m = LeaningTransitionMatrix::default();
    for (class, reply) in pairs {
        m.add(class, reply);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(plus: usize, zero: usize, minus: usize) -> Vec<Stance> {
        let mut v = vec![Stance::Republican; plus];
        v.extend(vec![Stance::Neutral; zero]);
        v.extend(vec![Stance::Democrat; minus]);
        v
    }

    #[test]
    fn leaning_examples() {
        assert_eq!(leaning_score(&labels(50, 0, 0)).unwrap(), 1.0);
        assert_eq!(leaning_score(&labels(25, 0, 25)).unwrap(), 0.0);
        assert_eq!(leaning_score(&labels(30, 20, 0)).unwrap(), 0.6);
        assert!(matches!(leaning_score(&[]), Err(StanceError::EmptyLabels)));
    }

    #[test]
    fn binning_boundaries() {
        assert_eq!(bin_leaning(0.25).unwrap(), Stance::Neutral);
        assert_eq!(bin_leaning(-0.25).unwrap(), Stance::Neutral);
        assert_eq!(bin_leaning(0.26).unwrap(), Stance::Republican);
        assert_eq!(bin_leaning(-0.26).unwrap(), Stance::Democrat);
        assert_eq!(bin_leaning(-1.0).unwrap(), Stance::Democrat);
        assert_eq!(bin_leaning(1.0).unwrap(), Stance::Republican);
        assert!(bin_leaning(1.01).is_err());
        assert!(bin_leaning(f64::NAN).is_err());
    }

    #[test]
    fn profile_requires_min_messages() {
        assert!(LeaningProfile::estimate("u", &labels(10, 0, 0), 50).is_err());
        let p = LeaningProfile::estimate("u", &labels(10, 40, 0), 50).unwrap();
        assert_eq!(p.score, 0.2);
        assert_eq!(p.class, Stance::Neutral);
        assert_eq!(p.messages, 50);
    }

    #[test]
    fn stance_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Stance::Democrat).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Stance>("1").unwrap(), Stance::Republican);
        assert!(serde_json::from_str::<Stance>("2").is_err());
    }

    #[test]
    fn degenerate_transition_row() {
        let m = conditional_leaning_distribution(vec![(Stance::Republican, Stance::Republican); 7]);
        assert_eq!(m.probabilities()[2], [0.0, 0.0, 1.0]);
        assert!(!m.row_defined(Stance::Democrat));
        assert_eq!(m.probabilities()[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_pairs_give_uniform_rows() {
        let mut pairs = Vec::new();
        for r in Stance::ALL {
            for c in Stance::ALL {
                for _ in 0..5 {
                    pairs.push((r, c));
                }
            }
        }
        let m = conditional_leaning_distribution(pairs);
        for row in m.probabilities() {
            for p in row {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    fn any_stance() -> impl Strategy<Value = Stance> {
        prop_oneof![Just(Stance::Democrat), Just(Stance::Neutral), Just(Stance::Republican)]
    }

    proptest! {
        #[test]
        fn leaning_permutation_invariant_and_bounded(mut v in proptest::collection::vec(any_stance(), 1..200), seed in any::<u64>()) {
            let a = leaning_score(&v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&a));
            let min = v.iter().map(|s| s.value()).min().unwrap() as f64;
            let max = v.iter().map(|s| s.value()).max().unwrap() as f64;
            prop_assert!(min <= a && a <= max);
            use rand::{seq::SliceRandom, SeedableRng};
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(leaning_score(&v).unwrap(), a);
        }

        #[test]
        fn binning_partitions_interval(l in -1.0f64..=1.0) {
            let c = bin_leaning(l).unwrap();
            let expected = [l < -0.25, (-0.25..=0.25).contains(&l), l > 0.25];
            prop_assert_eq!(expected.iter().filter(|&&b| b).count(), 1);
            prop_assert!(expected[c.index()]);
        }

        #[test]
        fn transition_rows_sum_to_one(pairs in proptest::collection::vec((any_stance(), any_stance()), 0..300)) {
            let m = conditional_leaning_distribution(pairs);
            for r in Stance::ALL {
                let row: f64 = Stance::ALL.iter().map(|&c| m.probability(r, c)).sum();
                if m.row_defined(r) {
                    prop_assert!((row - 1.0).abs() <= 1e-9);
                } else {
                    prop_assert_eq!(row, 0.0);
                }
                for c in Stance::ALL {
                    prop_assert!(m.probability(r, c) >= 0.0);
                }
            }
        }
    }
}
