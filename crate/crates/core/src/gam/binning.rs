use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::stats::quantile_sorted;

/// Cut points of one feature. Bin `k` covers `[cuts[k-1], cuts[k])`, with the
/// first and last bins open towards -inf and +inf, so out-of-range values
/// clamp to the edge bins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub cuts: Vec<f64>,
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }

    /// `(lo, hi)` bounds of a bin.
    pub fn interval(&self, bin: usize) -> (f64, f64) {
        let lo = if bin == 0 {
            f64::NEG_INFINITY
        } else {
            self.cuts[bin - 1]
        };
        let hi = self.cuts.get(bin).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// Bins for one column. Fewer than `max_bins` distinct values give one
    /// bin per value (cuts at midpoints); otherwise `max_bins - 1` cuts at
    /// uniform quantiles, deduplicated.
    pub fn from_values(values: &[f64], max_bins: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < max_bins {
            let cuts = distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
            return FeatureBins { cuts };
        }
        let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
        for k in 1..max_bins {
            let c = quantile_sorted(&sorted, k as f64 / max_bins as f64).expect("non-empty");
            if cuts.last().is_none_or(|&last| c > last) {
                cuts.push(c);
            }
        }
        FeatureBins { cuts }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinSchema {
    pub features: Vec<FeatureBins>,
}

pub fn build_bins(matrix: &DesignMatrix, max_bins: usize) -> BinSchema {
    let max_bins = max_bins.max(2);
    BinSchema {
        features: (0..matrix.n_cols())
            .map(|j| {
                let col: Vec<f64> = matrix.column(j).collect();
                FeatureBins::from_values(&col, max_bins)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_cuts_small_scale() {
        // 10 distinct values, 4 bins: cuts at positions 2.25, 4.5, 6.75
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let bins = FeatureBins::from_values(&values, 4);
        assert_eq!(bins.cuts, vec![3.25, 5.5, 7.75]);
    }

    #[test]
    fn thousand_values_give_255_cuts() {
        let values: Vec<f64> = (1..=1000).map(f64::from).collect();
        let bins = FeatureBins::from_values(&values, 256);
        assert_eq!(bins.cuts.len(), 255);
        assert_eq!(bins.cuts[0], 1.0 + 999.0 / 256.0);
        assert_eq!(bins.cuts[127], 1.0 + 999.0 * 128.0 / 256.0);
        assert!(bins.cuts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let bins = FeatureBins::from_values(&[1.0, 2.0, 2.0, 5.0], 256);
        assert_eq!(bins.cuts, vec![1.5, 3.5]);
        assert_eq!(FeatureBins::from_values(&[0.0, 1.0, 1.0], 256).n_bins(), 2);
        assert_eq!(FeatureBins::from_values(&[7.0; 5], 256).n_bins(), 1);
    }

    #[test]
    fn bin_lookup_clamps_and_is_half_open() {
        let bins = FeatureBins { cuts: vec![1.0, 2.0] };
        assert_eq!(bins.bin(-100.0), 0);
        assert_eq!(bins.bin(1.0), 1);
        assert_eq!(bins.bin(1.999), 1);
        assert_eq!(bins.bin(2.0), 2);
        assert_eq!(bins.bin(1e9), 2);
        assert_eq!(bins.interval(0), (f64::NEG_INFINITY, 1.0));
        assert_eq!(bins.interval(2), (2.0, f64::INFINITY));
    }

    #[test]
    fn heavy_ties_deduplicate_cuts() {
        let mut values = vec![0.0; 900];
        values.extend((0..300).map(f64::from));
        let bins = FeatureBins::from_values(&values, 16);
        assert!(bins.cuts.windows(2).all(|w| w[0] < w[1]));
        assert!(bins.cuts.len() < 15);
    }
}
