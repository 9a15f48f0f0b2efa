//! Two-sided Wilcoxon signed-rank test on paired samples.

use serde::{Deserialize, Serialize};

pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRankTest {
    /// Non-zero differences used.
    pub n: usize,
    pub n_zero: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Test of `x - y` being symmetric about zero. Zero differences are dropped.
pub fn signed_rank_test(x: &[f64], y: &[f64]) -> SignedRankTest {
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n_zero = diffs.len() - nonzero.len();
    let n = nonzero.len();
    let ranks = average_ranks(&nonzero.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    if n == 0 {
        return SignedRankTest {
            n,
            n_zero,
            w_plus,
            w_minus,
            p_value: 1.0,
            method: TestMethod::Exact,
        };
    }
    if n <= EXACT_MAX_N {
        // Doubled ranks are integers even with ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0f64; max + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w = (w_plus * 2.0).round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
        let upper: f64 = counts[w..].iter().sum::<f64>() / all;
        return SignedRankTest {
            n,
            n_zero,
            w_plus,
            w_minus,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            method: TestMethod::Exact,
        };
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let diff = w_plus - mean;
    let z = if var > 0.0 {
        (diff.abs() - 0.5).max(0.0) / var.sqrt()
    } else {
        0.0
    };
    SignedRankTest {
        n,
        n_zero,
        w_plus,
        w_minus,
        p_value: (2.0 * normal_sf(z)).min(1.0),
        method: TestMethod::NormalApproximation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_p_one() {
        let x = [0.1, 0.2, 0.3];
        let t = signed_rank_test(&x, &x);
        assert_eq!((t.n, t.n_zero, t.p_value), (0, 3, 1.0));
    }

    #[test]
    fn exact_all_positive() {
        // n = 5, every difference positive: P(W+ = 15) = 1/32, two-sided 1/16
        let x = [2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.0, 1.0, 1.0, 1.0, 1.0];
        let t = signed_rank_test(&x, &y);
        assert_eq!(t.w_plus, 15.0);
        assert!((t.p_value - 0.0625).abs() < 1e-12);
        assert_eq!(t.method, TestMethod::Exact);
    }

    #[test]
    fn exact_small_case_by_enumeration() {
        let d = [1.5, -0.5, 2.0, -3.0, 0.7, 4.0];
        let zeros = [0.0; 6];
        let t = signed_rank_test(&d, &zeros);
        // brute-force enumeration of all sign patterns
        let ranks = average_ranks(&d.iter().map(|v: &f64| v.abs()).collect::<Vec<_>>());
        let mut le = 0;
        let mut ge = 0;
        for mask in 0..(1u32 << 6) {
            let w: f64 = (0..6).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if w <= t.w_plus {
                le += 1;
            }
            if w >= t.w_plus {
                ge += 1;
            }
        }
        let expected = (2.0 * (le.min(ge) as f64) / 64.0).min(1.0);
        assert!((t.p_value - expected).abs() < 1e-12);
    }

    #[test]
    fn large_sample_normal_approximation() {
        let x: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 0.01).collect();
        let y: Vec<f64> = (0..100).map(|i| 0.5 + i as f64 * 0.005).collect();
        let t = signed_rank_test(&x, &y);
        assert_eq!(t.method, TestMethod::NormalApproximation);
        assert!(t.p_value < 1e-10);
        let sym: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1 + i / 2) as f64).collect();
        let t = signed_rank_test(&sym, &vec![0.0; 60]);
        assert!(t.p_value > 0.9);
    }

    #[test]
    fn erfc_reference_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-7);
        assert!((erfc(1.0) - 0.157_299_207_050_285_1).abs() < 1e-7);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-7);
    }
}
