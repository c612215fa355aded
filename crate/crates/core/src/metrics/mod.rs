//! Pure statistics: lexical diversity and its bootstrap curves, ideological
//! consistency, exaggeration ratios and length anomalies.

mod anomaly;
mod consistency;
mod diversity;
mod exaggeration;

pub use anomaly::{length_anomaly_report, quantile, AnomalyReport, QuantileMethod};
pub use consistency::{
    aggregate_consistency, align_pairs, consistency_loss, ConsistencyPair, ConsistencyReport, ConsistencyRow, PairKey,
};
pub use diversity::{incremental_diversity_curve, log_ttr, ttr, CurveConfig, DiversityCurve, DiversityMetric};
pub use exaggeration::{exaggeration_ratios, normalize_marker, ExaggerationRow, ExaggerationTable, MarkerKind};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("no observations")]
    Empty,
    #[error("human and agent replies are not aligned: {0}")]
    Misaligned(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub const ZERO: Self = Self {
        sum: 0.0,
        compensation: 0.0,
    };

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated mean, clamped to the observed range; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let m = xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64;
    m.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(xs.iter().copied().collect::<CompensatedSum>().value(), 2.0);
    }

    #[test]
    fn mean_of_constant_is_exact() {
        let x = 2f64.ln() / 38f64.ln();
        assert_eq!(mean(&[x; 100]), x);
        assert_eq!(mean(&[]), 0.0);
    }
}
