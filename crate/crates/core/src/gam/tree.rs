//! Depth-limited least-squares regression tree over the ordered bins of a
//! single feature.

/// Contiguous bin range `[start, end)` with its mean residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    at: usize,
    gain: f64,
}

fn range_sums(sum_r: &[f64], sum_w: &[f64], start: usize, end: usize) -> (f64, f64) {
    (sum_r[start..end].iter().sum(), sum_w[start..end].iter().sum())
}

/// Best split of `[start, end)`; on equal gain the lowest split index wins.
fn best_split(sum_r: &[f64], sum_w: &[f64], start: usize, end: usize, min_leaf_weight: f64) -> Option<Split> {
    let (total_r, total_w) = range_sums(sum_r, sum_w, start, end);
    if total_w <= 0.0 {
        return None;
    }
    let parent = total_r * total_r / total_w;
    let mut best: Option<Split> = None;
    let (mut left_r, mut left_w) = (0.0, 0.0);
    for at in start + 1..end {
        left_r += sum_r[at - 1];
        left_w += sum_w[at - 1];
        let right_w = total_w - left_w;
        if left_w < min_leaf_weight || right_w < min_leaf_weight || left_w <= 0.0 || right_w <= 0.0 {
            continue;
        }
        let right_r = total_r - left_r;
        let gain = left_r * left_r / left_w + right_r * right_r / right_w - parent;
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            best = Some(Split { at, gain });
        }
    }
    best
}

/// Grows a tree best-first up to `max_leaves` leaves from per-bin residual
/// sums `sum_r` and weights `sum_w`. Leaves come back ordered by bin and
/// cover every bin. Ties between candidate leaves go to the lower bin range.
pub fn grow_tree(sum_r: &[f64], sum_w: &[f64], max_leaves: usize, min_leaf_weight: f64) -> Vec<Leaf> {
    let n = sum_r.len();
    let mut ranges: Vec<(usize, usize)> = vec![(0, n)];
    while ranges.len() < max_leaves.max(1) {
        let mut chosen: Option<(usize, Split)> = None;
        for (i, &(s, e)) in ranges.iter().enumerate() {
            if let Some(split) = best_split(sum_r, sum_w, s, e, min_leaf_weight) {
                if chosen.is_none_or(|(_, c)| split.gain > c.gain) {
                    chosen = Some((i, split));
                }
            }
        }
        let Some((i, split)) = chosen else { break };
        let (s, e) = ranges[i];
        ranges[i] = (s, split.at);
        ranges.insert(i + 1, (split.at, e));
    }
    ranges
        .into_iter()
        .map(|(start, end)| {
            let (r, w) = range_sums(sum_r, sum_w, start, end);
            Leaf {
                start,
                end,
                value: if w > 0.0 { r / w } else { 0.0 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_found() {
        // residual 0 on bins 0..3, 2 on bins 3..6, unit weights
        let r = [0.0, 0.0, 0.0, 2.0, 2.0, 2.0];
        let w = [1.0; 6];
        let leaves = grow_tree(&r, &w, 2, 1.0);
        assert_eq!(leaves.len(), 2);
        assert_eq!((leaves[0].start, leaves[0].end, leaves[0].value), (0, 3, 0.0));
        assert_eq!((leaves[1].start, leaves[1].end, leaves[1].value), (3, 6, 2.0));
    }

    #[test]
    fn three_leaves_cover_all_bins() {
        let r = [-1.0, -1.0, 0.0, 0.0, 3.0, 3.0];
        let w = [1.0; 6];
        let leaves = grow_tree(&r, &w, 3, 1.0);
        assert_eq!(leaves.len(), 3);
        assert_eq!(leaves[0].start, 0);
        assert_eq!(leaves[2].end, 6);
        assert!(leaves.windows(2).all(|p| p[0].end == p[1].start));
        assert_eq!(leaves.iter().map(|l| l.value).collect::<Vec<_>>(), vec![-1.0, 0.0, 3.0]);
    }

    #[test]
    fn equal_gain_prefers_lowest_index() {
        // symmetric: splitting at 1 or at 3 gives the same gain
        let r = [1.0, 0.0, 0.0, 1.0];
        let w = [1.0; 4];
        let leaves = grow_tree(&r, &w, 2, 1.0);
        assert_eq!(leaves[0].end, 1);
    }

    #[test]
    fn constant_residual_does_not_split() {
        let leaves = grow_tree(&[0.5; 5], &[1.0; 5], 3, 1.0);
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].value, 0.5);
    }

    #[test]
    fn min_leaf_weight_is_respected() {
        let r = [5.0, 0.0, 0.0, 0.0];
        let w = [1.0, 1.0, 1.0, 1.0];
        let leaves = grow_tree(&r, &w, 2, 2.0);
        assert!(leaves.iter().all(|l| w[l.start..l.end].iter().sum::<f64>() >= 2.0));
    }
}
