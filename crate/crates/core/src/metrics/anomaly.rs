use serde::{Deserialize, Serialize};

use super::MetricError;

/// Sample quantile conventions (Hyndman and Fan numbering).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    /// Type 7: `h = (n - 1) p`, linear between order statistics.
    #[default]
    Linear,
    /// Type 8: `h = (n + 1/3) p + 1/3` (1-based), approximately median-unbiased.
    MedianUnbiased,
}

impl QuantileMethod {
    pub fn name(self) -> &'static str {
        match self {
            QuantileMethod::Linear => "linear",
            QuantileMethod::MedianUnbiased => "median_unbiased",
        }
    }
}

/// Quantile `p` of an ascending, non-empty slice.
pub fn quantile(sorted: &[f64], p: f64, method: QuantileMethod) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    let p = p.clamp(0.0, 1.0);
    // zero-based fractional position
    let h = match method {
        QuantileMethod::Linear => (n - 1) as f64 * p,
        QuantileMethod::MedianUnbiased => ((n as f64 + 1.0 / 3.0) * p + 1.0 / 3.0 - 1.0).clamp(0.0, (n - 1) as f64),
    };
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Tukey fences over character lengths plus the share of lengths within `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub n: usize,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Percentage of lengths at or below `limit`.
    pub percentile_of_limit: f64,
    /// Lengths above `limit`.
    pub anomalies: usize,
    /// Lengths outside the fences.
    pub outside_fences: usize,
    pub limit: usize,
    pub quantile_method: QuantileMethod,
}

impl AnomalyReport {
    /// Fences from given quartiles.
    pub fn fences(q1: f64, q3: f64) -> (f64, f64) {
        let iqr = q3 - q1;
        (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
    }
}

pub fn length_anomaly_report(
    lengths: &[usize],
    limit: usize,
    method: QuantileMethod,
) -> Result<AnomalyReport, MetricError> {
    if lengths.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sorted: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25, method);
    let q3 = quantile(&sorted, 0.75, method);
    let (lower_fence, upper_fence) = AnomalyReport::fences(q1, q3);
    let n = lengths.len();
    Ok(AnomalyReport {
        n,
        q1,
        q3,
        iqr: q3 - q1,
        lower_fence,
        upper_fence,
        percentile_of_limit: 100.0 * lengths.iter().filter(|&&l| l <= limit).count() as f64 / n as f64,
        anomalies: lengths.iter().filter(|&&l| l > limit).count(),
        outside_fences: sorted.iter().filter(|&&l| l < lower_fence || l > upper_fence).count(),
        limit,
        quantile_method: method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn human_row_fences() {
        assert_eq!(AnomalyReport::fences(49.0, 127.0), (-68.0, 244.0));
    }

    #[test]
    fn equal_lengths_collapse() {
        let r = length_anomaly_report(&[90; 17], 280, QuantileMethod::Linear).unwrap();
        assert_eq!((r.iqr, r.lower_fence, r.upper_fence), (0.0, 90.0, 90.0));
        assert_eq!(r.percentile_of_limit, 100.0);
        assert_eq!(r.anomalies, 0);
    }

    #[test]
    fn linear_matches_numpy_default() {
        // numpy.percentile([1, 2, 3, 4], [25, 75]) == [1.75, 3.25]
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.25, QuantileMethod::Linear), 1.75);
        assert_eq!(quantile(&xs, 0.75, QuantileMethod::Linear), 3.25);
        // method="median_unbiased" gives [1.41666.., 3.58333..]
        assert!((quantile(&xs, 0.25, QuantileMethod::MedianUnbiased) - 1.416_666_666_666_666_7).abs() < 1e-12);
        assert!((quantile(&xs, 0.75, QuantileMethod::MedianUnbiased) - 3.583_333_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn overlength_counts() {
        let r = length_anomaly_report(&[10, 280, 281, 400], 280, QuantileMethod::Linear).unwrap();
        assert_eq!(r.anomalies, 2);
        assert_eq!(r.percentile_of_limit, 50.0);
        assert!(length_anomaly_report(&[], 280, QuantileMethod::Linear).is_err());
    }

    /// Independent type-7 oracle: rank-based formula on a freshly sorted copy.
    fn oracle_q(xs: &[usize], p: f64) -> f64 {
        let mut v = xs.to_vec();
        v.sort_unstable();
        let pos = p * (v.len() as f64 - 1.0);
        let i = pos as usize;
        let j = if i + 1 < v.len() { i + 1 } else { i };
        v[i] as f64 * (1.0 - (pos - i as f64)) + v[j] as f64 * (pos - i as f64)
    }

    proptest! {
        #[test]
        fn fences_match_oracle(xs in proptest::collection::vec(0usize..400, 1..300), mu in any::<bool>()) {
            let method = if mu { QuantileMethod::MedianUnbiased } else { QuantileMethod::Linear };
            let r = length_anomaly_report(&xs, 280, method).unwrap();
            prop_assert_eq!(r.lower_fence, r.q1 - 1.5 * (r.q3 - r.q1));
            prop_assert_eq!(r.upper_fence, r.q3 + 1.5 * (r.q3 - r.q1));
            prop_assert!(r.lower_fence <= r.upper_fence && r.iqr >= 0.0);
            if !mu {
                prop_assert!((r.q1 - oracle_q(&xs, 0.25)).abs() < 1e-9);
                prop_assert!((r.q3 - oracle_q(&xs, 0.75)).abs() < 1e-9);
            }
        }
    }
}
