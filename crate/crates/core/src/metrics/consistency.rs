use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::stance::{LeaningClass, Stance};

/// `|C - s| / 2`: 0 when the reply matches the class, 1 at the opposite pole.
pub fn consistency_loss(class: LeaningClass, reply: Stance) -> f64 {
    (class.value() as i32 - reply.value() as i32).abs() as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub user_id: String,
    pub parent_id: String,
}

/// Human and agent stance for the same (user, parent) reply slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyPair {
    pub key: PairKey,
    pub class: LeaningClass,
    pub human: Stance,
    pub agent: Stance,
}

/// Joins human and agent labels on their keys. Both sides must cover exactly
/// the same keys, each once, with matching classes.
pub fn align_pairs(
    human: &[(PairKey, LeaningClass, Stance)],
    agent: &[(PairKey, LeaningClass, Stance)],
) -> Result<Vec<ConsistencyPair>, MetricError> {
    let mut h = BTreeMap::new();
    for (k, c, s) in human {
        if h.insert(k, (*c, *s)).is_some() {
            return Err(MetricError::Misaligned(format!("duplicate human reply for {k:?}")));
        }
    }
    let mut out = Vec::with_capacity(agent.len());
    let mut seen = BTreeSet::new();
    for (k, c, s) in agent {
        if !seen.insert(k) {
            return Err(MetricError::Misaligned(format!("duplicate agent reply for {k:?}")));
        }
        let (hc, hs) = h
            .get(k)
            .ok_or_else(|| MetricError::Misaligned(format!("agent reply {k:?} has no human counterpart")))?;
        if hc != c {
            return Err(MetricError::Misaligned(format!("class differs for {k:?}")));
        }
        out.push(ConsistencyPair {
            key: k.clone(),
            class: *c,
            human: *hs,
            agent: *s,
        });
    }
    if out.len() != h.len() {
        return Err(MetricError::Misaligned(format!(
            "{} human replies, {} agent replies",
            h.len(),
            out.len()
        )));
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub class: LeaningClass,
    pub users: usize,
    pub replies: usize,
    /// `None` when the class has no replies.
    pub loss_human: Option<f64>,
    pub loss_agent: Option<f64>,
    pub consistency_human: Option<f64>,
    pub consistency_agent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// One row per class, Democrat, Neutral, Republican.
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    pub fn row(&self, class: LeaningClass) -> &ConsistencyRow {
        &self.rows[class.index()]
    }
}

/// Mean loss over all replies of all users in each class, for both
/// populations over the same pairs.
pub fn aggregate_consistency(pairs: &[ConsistencyPair]) -> Result<ConsistencyReport, MetricError> {
    let mut keys = BTreeSet::new();
    for p in pairs {
        if !keys.insert(&p.key) {
            return Err(MetricError::Misaligned(format!("duplicate pair {:?}", p.key)));
        }
    }
    let rows = Stance::ALL
        .iter()
        .map(|&class| {
            let in_class: Vec<_> = pairs.iter().filter(|p| p.class == class).collect();
            let users = in_class.iter().map(|p| &p.key.user_id).collect::<BTreeSet<_>>().len();
            let replies = in_class.len();
            // losses are multiples of 1/2, so integer sums are exact
            let twice = |f: fn(&ConsistencyPair) -> Stance| -> u64 {
                in_class
                    .iter()
                    .map(|p| (class.value() as i64 - f(p).value() as i64).unsigned_abs())
                    .sum()
            };
            let loss = |sum2: u64| (replies > 0).then(|| sum2 as f64 / (2.0 * replies as f64));
            let loss_human = loss(twice(|p| p.human));
            let loss_agent = loss(twice(|p| p.agent));
            ConsistencyRow {
                class,
                users,
                replies,
                loss_human,
                loss_agent,
                consistency_human: loss_human.map(|l| 1.0 - l),
                consistency_agent: loss_agent.map(|l| 1.0 - l),
            }
        })
        .collect();
    Ok(ConsistencyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(u: &str, p: &str) -> PairKey {
        PairKey {
            user_id: u.into(),
            parent_id: p.into(),
        }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(consistency_loss(Stance::Republican, Stance::Republican), 0.0);
        assert_eq!(consistency_loss(Stance::Republican, Stance::Democrat), 1.0);
        assert_eq!(consistency_loss(Stance::Neutral, Stance::Republican), 0.5);
        for a in Stance::ALL {
            for b in Stance::ALL {
                assert_eq!(consistency_loss(a, b), consistency_loss(b, a));
                assert!([0.0, 0.5, 1.0].contains(&consistency_loss(a, b)));
            }
        }
    }

    #[test]
    fn all_matching_and_all_opposite() {
        let pairs: Vec<_> = (0..10)
            .map(|i| ConsistencyPair {
                key: key(&format!("u{}", i % 3), &format!("p{i}")),
                class: Stance::Democrat,
                human: Stance::Republican,
                agent: Stance::Democrat,
            })
            .collect();
        let r = aggregate_consistency(&pairs).unwrap();
        let row = r.row(Stance::Democrat);
        assert_eq!(row.consistency_agent, Some(1.0));
        assert_eq!(row.consistency_human, Some(0.0));
        assert_eq!((row.users, row.replies), (3, 10));
        assert_eq!(r.row(Stance::Neutral).loss_agent, None);
    }

    #[test]
    fn alignment_is_enforced() {
        let h = vec![(key("u", "a"), Stance::Neutral, Stance::Neutral), (key("u", "b"), Stance::Neutral, Stance::Democrat)];
        let a = vec![(key("u", "b"), Stance::Neutral, Stance::Republican), (key("u", "a"), Stance::Neutral, Stance::Neutral)];
        let pairs = align_pairs(&h, &a).unwrap();
        assert_eq!(pairs[1].human, Stance::Democrat);
        assert_eq!(pairs[1].agent, Stance::Republican);
        assert!(align_pairs(&h, &a[..1]).is_err());
        let extra = vec![a[0].clone(), a[1].clone(), (key("v", "c"), Stance::Neutral, Stance::Neutral)];
        assert!(align_pairs(&h, &extra).is_err());
        let dup = vec![a[0].clone(), a[0].clone()];
        assert!(align_pairs(&h, &dup).is_err());
        let wrong_class = vec![(key("u", "b"), Stance::Democrat, Stance::Republican), a[1].clone()];
        assert!(align_pairs(&h, &wrong_class).is_err());
    }

    fn any_stance() -> impl Strategy<Value = Stance> {
        prop_oneof![Just(Stance::Democrat), Just(Stance::Neutral), Just(Stance::Republican)]
    }

    proptest! {
        #[test]
        fn aggregates_match_double_sum(raw in proptest::collection::vec((0u8..20, any_stance(), any_stance(), any_stance()), 0..200)) {
            // one class per user
            let class_of = |u: u8| Stance::ALL[(u % 3) as usize];
            let pairs: Vec<_> = raw.iter().enumerate().map(|(i, (u, _, h, a))| ConsistencyPair {
                key: key(&format!("u{u}"), &format!("p{i}")),
                class: class_of(*u),
                human: *h,
                agent: *a,
            }).collect();
            let r = aggregate_consistency(&pairs).unwrap();
            for c in Stance::ALL {
                let mut by_user: BTreeMap<&str, Vec<&ConsistencyPair>> = BTreeMap::new();
                for p in pairs.iter().filter(|p| p.class == c) {
                    by_user.entry(&p.key.user_id).or_default().push(p);
                }
                let total: usize = by_user.values().map(Vec::len).sum();
                let row = r.row(c);
                prop_assert_eq!(row.users, by_user.len());
                prop_assert_eq!(row.replies, total);
                if total == 0 {
                    prop_assert!(row.loss_agent.is_none());
                    continue;
                }
                let mut sh = 0.0;
                let mut sa = 0.0;
                for replies in by_user.values() {
                    for p in replies {
                        sh += consistency_loss(c, p.human);
                        sa += consistency_loss(c, p.agent);
                    }
                }
                prop_assert!((row.loss_human.unwrap() - sh / total as f64).abs() < 1e-12);
                prop_assert!((row.consistency_agent.unwrap() - (1.0 - sa / total as f64)).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&row.consistency_agent.unwrap()));
            }
        }
    }
}
