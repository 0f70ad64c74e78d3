//! Summary statistics for error distributions.

use serde::{Deserialize, Serialize};

/// Boxplot summary. `min`/`max` span all samples; `outliers` are the
/// samples beyond 1.5·IQR from the quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (p25, p75) = (percentile(&sorted, 0.25), percentile(&sorted, 0.75));
    let iqr = p75 - p25;
    let (lo, hi) = (p25 - 1.5 * iqr, p75 + 1.5 * iqr);
    Some(BoxStats {
        n: values.len(),
        mean: mean(values)?,
        min: sorted[0],
        p25,
        p50: percentile(&sorted, 0.5),
        p75,
        max: sorted[sorted.len() - 1],
        outliers: sorted.iter().copied().filter(|&v| v < lo || v > hi).collect(),
    })
}

/// Empirical CDF as `(value, cumulative_fraction)` pairs, one per sample.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_and_outliers() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        let s = box_stats(&v).unwrap();
        assert_eq!(s.p25, 2.0);
        assert_eq!(s.p50, 3.0);
        assert_eq!(s.p75, 4.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 100.0);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.mean, 22.0);
        assert!(box_stats(&[]).is_none());
    }

    #[test]
    fn interpolated_percentile() {
        assert_eq!(percentile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(percentile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn cdf_normalized_and_monotone() {
        let c = cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.last().unwrap().1, 1.0);
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert!(cdf(&[]).is_empty());
    }
}
