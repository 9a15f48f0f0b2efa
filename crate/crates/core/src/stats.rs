//! Order statistics shared by the anomaly, imputation and reference code.

use crate::error::{Error, Result};

/// Minimum sample size for a boxplot quartile pair.
pub const MIN_QUARTILE_SUPPORT: usize = 4;

/// Linear-interpolation quantile at fractional position `q * (n - 1)` of an
/// ascending sample. Returns `None` for an empty sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// First and third quartiles of an ascending sample.
pub fn quartiles(sorted: &[f64]) -> Result<(f64, f64)> {
    if sorted.len() < MIN_QUARTILE_SUPPORT {
        return Err(Error::InsufficientSupport(format!(
            "{} values, need at least {MIN_QUARTILE_SUPPORT}",
            sorted.len()
        )));
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let q1 = quantile_sorted(sorted, 0.25).unwrap_or(f64::NAN);
    let q3 = quantile_sorted(sorted, 0.75).unwrap_or(f64::NAN);
    Ok((q1, q3))
}

/// Sorts a copy of `values` ascending (NaNs are the caller's problem; they sort last).
pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    let sorted = sorted_copy(values);
    quantile_sorted(&sorted, 0.5)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate_linearly() {
        // positions 1 and 3 land on order statistics
        assert_eq!(quartiles(&[2.0, 4.0, 6.0, 8.0, 100.0]).unwrap(), (4.0, 8.0));
        // positions 0.75 and 2.25
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0]).unwrap(), (1.75, 3.25));
        assert_eq!(quartiles(&[1.0; 4]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn quartiles_need_four_values() {
        assert!(matches!(
            quartiles(&[1.0, 2.0, 3.0]),
            Err(Error::InsufficientSupport(_))
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[34.0, 30.0, 32.0]), Some(32.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
