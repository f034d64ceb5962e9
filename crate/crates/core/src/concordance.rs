//! Concordant/discordant pair counting.
//!
//! Everything downstream (tau estimators, U-statistic covariance terms, tree
//! split scans) is built on exact integer counts of strict double
//! inequalities, so rank invariance and the estimator identities hold bit-
//! for-bit. Ties contribute to neither count.

use crate::pair::PairIndex;
use crate::sample::Sample;

/// Twice the concordance kernel pi_{a,b}(x1, x2): 1 if the two points are
/// strictly concordant in both coordinates, 0 otherwise (ties included).
#[inline(always)]
pub fn concordant_indicator(x1a: f64, x1b: f64, x2a: f64, x2b: f64) -> u64 {
    (((x1a < x2a) & (x1b < x2b)) | ((x2a < x1a) & (x2b < x1b))) as u64
}

/// Concordance kernel pi_{a,b} itself; 0 or 1/2.
#[inline(always)]
pub fn concordance_kernel(x1a: f64, x1b: f64, x2a: f64, x2b: f64) -> f64 {
    concordant_indicator(x1a, x1b, x2a, x2b) as f64 * 0.5
}

/// Exact concordant/discordant pair counts over all unordered pairs.
///
/// Uses an O(N log N) merge-count when both coordinates are tie-free and the
/// input is large enough to bother; the counts are integers, so the fast path
/// is identical to the double loop. Falls back to the O(N^2) scan otherwise.
pub fn count_pairs(xs: &[f64], ys: &[f64]) -> (u64, u64) {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return (0, 0);
    }
    if n >= 64 {
        if let Some(counts) = count_pairs_sorted(xs, ys) {
            return counts;
        }
    }
    count_pairs_quadratic(xs, ys)
}

fn count_pairs_quadratic(xs: &[f64], ys: &[f64]) -> (u64, u64) {
    let n = xs.len();
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    for i in 0..n {
        let (xi, yi) = (xs[i], ys[i]);
        for j in (i + 1)..n {
            let dx = xs[j] - xi;
            let dy = ys[j] - yi;
            let prod = dx * dy;
            concordant += (prod > 0.0) as u64;
            discordant += (prod < 0.0) as u64;
        }
    }
    (concordant, discordant)
}

/// Tie-free fast path: sort by x, count inversions of y. Returns None when a
/// tie is present in either coordinate.
fn count_pairs_sorted(xs: &[f64], ys: &[f64]) -> Option<(u64, u64)> {
    let n = xs.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&i, &j| xs[i as usize].partial_cmp(&xs[j as usize]).unwrap());
    let mut seq = Vec::with_capacity(n);
    for w in 0..n {
        if w + 1 < n && xs[order[w] as usize] == xs[order[w + 1] as usize] {
            return None;
        }
        seq.push(ys[order[w] as usize]);
    }
    let mut sorted_y = seq.clone();
    sorted_y.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted_y.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let inversions = merge_count(&mut seq);
    let total = (n as u64) * (n as u64 - 1) / 2;
    (inversions <= total).then(|| (total - inversions, inversions))
}

fn merge_count(values: &mut [f64]) -> u64 {
    let n = values.len();
    let mut buf = vec![0.0f64; n];
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start + width < n {
            let mid = start + width;
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if values[i] <= values[j] {
                    buf[k] = values[i];
                    i += 1;
                } else {
                    buf[k] = values[j];
                    inversions += (mid - i) as u64;
                    j += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&values[i..mid]);
            let k2 = k + (mid - i);
            buf[k2..end].copy_from_slice(&values[j..end]);
            values[start..end].copy_from_slice(&buf[start..end]);
            start = end;
        }
        width *= 2;
    }
    inversions
}

/// Extracts the (a, b) coordinate columns of a pair for a set of rows.
pub fn pair_columns(sample: &Sample, rows: &[usize], pair: PairIndex) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for &i in rows {
        xs.push(sample.conditioned_value(i, pair.a));
        ys.push(sample.conditioned_value(i, pair.b));
    }
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn kernel_is_symmetric_and_half_valued() {
        assert_eq!(concordance_kernel(0.0, 0.0, 1.0, 1.0), 0.5);
        assert_eq!(concordance_kernel(1.0, 1.0, 0.0, 0.0), 0.5);
        assert_eq!(concordance_kernel(0.0, 1.0, 1.0, 0.0), 0.0);
        // ties in either coordinate contribute nothing
        assert_eq!(concordance_kernel(0.0, 0.5, 0.0, 1.0), 0.0);
        assert_eq!(concordance_kernel(0.3, 1.0, 0.7, 1.0), 0.0);
        assert_eq!(concordance_kernel(0.3, 1.0, 0.3, 1.0), 0.0);
    }

    #[test]
    fn fast_path_matches_quadratic_on_random_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(64..300);
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            assert_eq!(count_pairs(&xs, &ys), count_pairs_quadratic(&xs, &ys));
        }
    }

    #[test]
    fn ties_fall_back_and_are_excluded_from_both_counts() {
        let xs = vec![1.0, 1.0, 2.0, 3.0];
        let ys = vec![0.5, 0.7, 0.7, 0.1];
        // pairs: (0,1) tie in x; (1,2) tie in y; rest strict
        let (c, d) = count_pairs(&xs, &ys);
        assert_eq!(c + d, 4);
        assert_eq!((c, d), (1, 3));
    }
}
