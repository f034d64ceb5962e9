//! Plug-in estimation of the limiting covariance of the stacked tau vector.
//!
//! The triple-sum U-statistic I-hat factorizes over its outer indices:
//! with u_{ab,k}[i3] = sum_{i1 in S_k} 2*pi_ab(X_i1, X_i3), the whole
//! n^3-term sum equals sum_{i3 in S_k ∩ S_l} u_{ab,k}[i3] * u_{a'b',l}[i3] / 4
//! term for term, diagonal index coincidences included. All accumulation is
//! on integers, so results are exact, independent of chunking and worker
//! count, and identical to the literal triple loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{members, BoxFamily, CondBox};
use crate::concordance::concordant_indicator;
use crate::error::{Error, Result};
use crate::estimators::{tau_matrix_with_members, TauEstimates};
use crate::pair::{all_pairs, PairIndex};
use crate::sample::Sample;

/// Ingredients of the plug-in covariance, retained for audit.
///
/// Layouts: `p_hat`, `counts` are per box; `p_overlap` is m x m row-major;
/// `d_hat` is pair-major (pair * m + k); `j_hat` is (pair, k, l) row-major;
/// `i_hat` is (pair_i, pair_j, k, l) row-major. On the disjoint path only
/// the k = l cells of `j_hat` / `i_hat` are computed; cross cells are zero,
/// which is also their exact value for disjoint boxes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovIngredients {
    pub p_hat: Vec<f64>,
    pub counts: Vec<usize>,
    pub p_overlap: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub j_hat: Vec<f64>,
    pub i_hat: Vec<f64>,
}

/// Estimated limiting covariance of sqrt(n) * (stacked tau vector), a square
/// matrix of size m * p(p-1)/2 laid out blockwise: row index pair_i * m + k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub dim: usize,
    pub m: usize,
    pub pair_count: usize,
    /// Row-major dim x dim matrix.
    pub delta: Vec<f64>,
    pub ingredients: CovIngredients,
    pub disjoint_path: bool,
}

impl CovarianceEstimate {
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.delta[row * self.dim + col]
    }

    pub fn is_symmetric(&self) -> bool {
        for r in 0..self.dim {
            for c in 0..r {
                if self.entry(r, c) != self.entry(c, r) {
                    return false;
                }
            }
        }
        true
    }

    #[cfg(test)]
    pub(crate) fn diagonal_for_test(diag: Vec<f64>) -> Self {
        let dim = diag.len();
        let mut delta = vec![0.0; dim * dim];
        for (i, v) in diag.into_iter().enumerate() {
            delta[i * dim + i] = v;
        }
        CovarianceEstimate {
            dim,
            m: dim,
            pair_count: 1,
            delta,
            ingredients: CovIngredients {
                p_hat: vec![],
                counts: vec![],
                p_overlap: vec![],
                d_hat: vec![],
                j_hat: vec![],
                i_hat: vec![],
            },
            disjoint_path: true,
        }
    }

    #[cfg(test)]
    pub(crate) fn identity_for_test(dim: usize) -> Self {
        Self::diagonal_for_test(vec![1.0; dim])
    }
}

/// Per-row count vector u_{ab,k}[i3] = sum_{i in rows} 2*pi_ab(X_i, X_i3).
fn count_vector(sample: &Sample, rows: &[usize], pair: PairIndex) -> Vec<u32> {
    let n = sample.n();
    let xa: Vec<f64> = rows.iter().map(|&i| sample.conditioned_value(i, pair.a)).collect();
    let xb: Vec<f64> = rows.iter().map(|&i| sample.conditioned_value(i, pair.b)).collect();
    (0..n)
        .into_par_iter()
        .map(|i3| {
            let za = sample.conditioned_value(i3, pair.a);
            let zb = sample.conditioned_value(i3, pair.b);
            let mut acc = 0u64;
            for (&ya, &yb) in xa.iter().zip(xb.iter()) {
                acc += concordant_indicator(ya, yb, za, zb);
            }
            acc as u32
        })
        .collect()
}

fn i_hat_from_vectors(
    n: usize,
    u_k: &[u32],
    u_l: &[u32],
    overlap_rows: &[usize],
    count_k: usize,
    count_l: usize,
) -> f64 {
    let sum: u64 = overlap_rows
        .iter()
        .map(|&i3| u_k[i3] as u64 * u_l[i3] as u64)
        .sum();
    // pi * pi contributes 1/4 per firing pair; n^3 p_k p_l = n N_k N_l
    sum as f64 / (4 * n as u64 * count_k as u64 * count_l as u64) as f64
}

fn j_hat_from_rows(
    sample: &Sample,
    pair: PairIndex,
    rows_k: &[usize],
    overlap_rows: &[usize],
) -> f64 {
    let n = sample.n();
    let xa: Vec<f64> = rows_k.iter().map(|&i| sample.conditioned_value(i, pair.a)).collect();
    let xb: Vec<f64> = rows_k.iter().map(|&i| sample.conditioned_value(i, pair.b)).collect();
    let mut sum = 0u64;
    for &j in overlap_rows {
        let za = sample.conditioned_value(j, pair.a);
        let zb = sample.conditioned_value(j, pair.b);
        for (&ya, &yb) in xa.iter().zip(xb.iter()) {
            sum += concordant_indicator(ya, yb, za, zb);
        }
    }
    // pi contributes 1/2 per firing; n(n-1) p_k = (n-1) N_k
    sum as f64 / (2 * (n as u64 - 1) * rows_k.len() as u64) as f64
}

/// I-hat for a single box (k = l), the printed O(n^3) estimator.
pub fn i_hat(
    sample: &Sample,
    pair: PairIndex,
    pair2: PairIndex,
    cond_box: &CondBox,
) -> Result<f64> {
    i_hat_overlap(sample, pair, pair2, cond_box, cond_box)
}

/// General (k, l) plug-in with the intersection indicator inside the triple
/// sum; reduces to the printed estimator when both boxes coincide.
pub fn i_hat_overlap(
    sample: &Sample,
    pair: PairIndex,
    pair2: PairIndex,
    box_k: &CondBox,
    box_l: &CondBox,
) -> Result<f64> {
    let rows_k = members(sample, box_k);
    let rows_l = members(sample, box_l);
    if rows_k.is_empty() {
        return Err(Error::DegenerateBox { box_index: None });
    }
    if rows_l.is_empty() {
        return Err(Error::DegenerateBox { box_index: None });
    }
    let in_l: Vec<bool> = membership_flags(sample.n(), &rows_l);
    let overlap: Vec<usize> = rows_k.iter().copied().filter(|&i| in_l[i]).collect();
    let u_k = count_vector(sample, &rows_k, pair);
    let u_l = count_vector(sample, &rows_l, pair2);
    Ok(i_hat_from_vectors(sample.n(), &u_k, &u_l, &overlap, rows_k.len(), rows_l.len()))
}

/// J-hat_{a,b,k,l}: pairs (i, j) with i in A_k and j in A_k ∩ A_l.
pub fn j_hat(
    sample: &Sample,
    pair: PairIndex,
    box_k: &CondBox,
    box_l: &CondBox,
) -> Result<f64> {
    let rows_k = members(sample, box_k);
    if rows_k.is_empty() {
        return Err(Error::DegenerateBox { box_index: None });
    }
    let rows_l = members(sample, box_l);
    let in_l = membership_flags(sample.n(), &rows_l);
    let overlap: Vec<usize> = rows_k.iter().copied().filter(|&i| in_l[i]).collect();
    Ok(j_hat_from_rows(sample, pair, &rows_k, &overlap))
}

fn membership_flags(n: usize, rows: &[usize]) -> Vec<bool> {
    let mut flags = vec![false; n];
    for &i in rows {
        flags[i] = true;
    }
    flags
}

/// Full plug-in covariance estimate; the path follows the family's
/// disjointness declaration unless forced.
pub fn delta_hat(sample: &Sample, family: &BoxFamily) -> Result<CovarianceEstimate> {
    delta_hat_with_path(sample, family, family.disjoint)
}

pub fn delta_hat_with_path(
    sample: &Sample,
    family: &BoxFamily,
    disjoint_path: bool,
) -> Result<CovarianceEstimate> {
    family.validate_dim(sample.conditioning_dim())?;
    let n = sample.n();
    if n < 3 {
        return Err(Error::invalid(format!("covariance estimation needs n >= 3, got {n}")));
    }
    let member_lists: Vec<Vec<usize>> = family.boxes.iter().map(|b| members(sample, b)).collect();
    for (k, rows) in member_lists.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::DegenerateBox { box_index: Some(k) });
        }
    }
    let tau = tau_matrix_with_members(sample, &member_lists, false)?;
    delta_hat_from_parts(sample, &member_lists, &tau, disjoint_path)
}

/// Covariance assembly on precomputed memberships and tau estimates.
pub(crate) fn delta_hat_from_parts(
    sample: &Sample,
    member_lists: &[Vec<usize>],
    tau: &TauEstimates,
    disjoint_path: bool,
) -> Result<CovarianceEstimate> {
    let n = sample.n();
    let m = member_lists.len();
    let pairs = all_pairs(sample.conditioned_dim());
    let np = pairs.len();
    let dim = np * m;
    let counts: Vec<usize> = member_lists.iter().map(|r| r.len()).collect();
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let flags: Vec<Vec<bool>> = member_lists
        .iter()
        .map(|rows| membership_flags(n, rows))
        .collect();
    let mut overlap_counts = vec![0usize; m * m];
    let mut overlap_rows: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); m]; m];
    for k in 0..m {
        for l in k..m {
            let rows: Vec<usize> = member_lists[k]
                .iter()
                .copied()
                .filter(|&i| flags[l][i])
                .collect();
            overlap_counts[k * m + l] = rows.len();
            overlap_counts[l * m + k] = rows.len();
            overlap_rows[l][k] = rows.clone();
            overlap_rows[k][l] = rows;
        }
    }
    let p_overlap: Vec<f64> = overlap_counts.iter().map(|&c| c as f64 / n as f64).collect();

    // u-vectors for every (pair, box)
    let u_vectors: Vec<Vec<u32>> = (0..np * m)
        .into_par_iter()
        .map(|idx| count_vector(sample, &member_lists[idx % m], pairs[idx / m]))
        .collect();
    let u = |pair_idx: usize, k: usize| -> &Vec<u32> { &u_vectors[pair_idx * m + k] };

    // D-hat shares its numerator with the tau concordant counts
    let d_hat_grid: Vec<f64> = (0..np * m)
        .map(|idx| tau.concordant[idx] as f64 / ((n * (n - 1)) as f64))
        .collect();

    // J-hat grid: (pair, k, l); cross cells only on the general path
    let mut j_grid = vec![0.0f64; np * m * m];
    for pair_idx in 0..np {
        for k in 0..m {
            for l in 0..m {
                if disjoint_path && k != l {
                    continue;
                }
                if overlap_counts[k * m + l] == 0 {
                    continue;
                }
                j_grid[(pair_idx * m + k) * m + l] = j_hat_from_rows(
                    sample,
                    pairs[pair_idx],
                    &member_lists[k],
                    &overlap_rows[k][l],
                );
            }
        }
    }

    // I-hat grid: (pair_i, pair_j, k, l)
    let mut i_grid = vec![0.0f64; np * np * m * m];
    for pi in 0..np {
        for pj in 0..np {
            for k in 0..m {
                for l in 0..m {
                    if disjoint_path && k != l {
                        continue;
                    }
                    if overlap_counts[k * m + l] == 0 {
                        continue;
                    }
                    i_grid[((pi * np + pj) * m + k) * m + l] = i_hat_from_vectors(
                        n,
                        u(pi, k),
                        u(pj, l),
                        &overlap_rows[k][l],
                        counts[k],
                        counts[l],
                    );
                }
            }
        }
    }

    let mut delta = vec![0.0f64; dim * dim];
    for pi in 0..np {
        for k in 0..m {
            let row = pi * m + k;
            for pj in 0..np {
                for l in 0..m {
                    let col = pj * m + l;
                    if col < row {
                        continue;
                    }
                    let value = if disjoint_path {
                        if k != l {
                            0.0
                        } else {
                            let i_kk = i_grid[((pi * np + pj) * m + k) * m + k];
                            16.0 * (4.0 * i_kk / (p_hat[k] * p_hat[k])
                                - (1.0 + tau.tau(pi, k)) * (1.0 + tau.tau(pj, k))
                                    / (4.0 * p_hat[k]))
                        }
                    } else {
                        let i_kl = i_grid[((pi * np + pj) * m + k) * m + l];
                        let d_ik = d_hat_grid[pi * m + k];
                        let d_jl = d_hat_grid[pj * m + l];
                        let j_ikl = j_grid[(pi * m + k) * m + l];
                        let j_jlk = j_grid[(pj * m + l) * m + k];
                        let (pk, pl) = (p_hat[k], p_hat[l]);
                        64.0 * (i_kl / (pk * pl) + d_ik * d_jl * p_overlap[k * m + l] / (pk.powi(3) * pl.powi(3))
                            - d_jl * j_ikl / (pk * pl.powi(3))
                            - d_ik * j_jlk / (pl * pk.powi(3)))
                    };
                    if !value.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "covariance entry (pair {pi}, box {k}) x (pair {pj}, box {l})"
                        )));
                    }
                    delta[row * dim + col] = value;
                    delta[col * dim + row] = value;
                }
            }
        }
    }

    Ok(CovarianceEstimate {
        dim,
        m,
        pair_count: np,
        delta,
        ingredients: CovIngredients {
            p_hat,
            counts,
            p_overlap,
            d_hat: d_hat_grid,
            j_hat: j_grid,
            i_hat: i_grid,
        },
        disjoint_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::CondBox;
    use crate::estimators::d_hat;

    fn sample3(points: &[(f64, f64, f64)]) -> Sample {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y, z)| vec![x, y, z]).collect();
        Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap()
    }

    /// Literal triple loop, the independent oracle for I-hat.
    fn i_hat_oracle(sample: &Sample, pair: PairIndex, pair2: PairIndex, box_k: &CondBox, box_l: &CondBox) -> f64 {
        use crate::concordance::concordance_kernel;
        let n = sample.n();
        let mut point = vec![0.0; sample.conditioning_dim()];
        let in_box = |i: usize, b: &CondBox, point: &mut Vec<f64>| {
            sample.conditioning_point(i, point);
            b.contains(point)
        };
        let mut sum = 0.0;
        let mut nk = 0u64;
        let mut nl = 0u64;
        for i in 0..n {
            nk += in_box(i, box_k, &mut point) as u64;
            nl += in_box(i, box_l, &mut point) as u64;
        }
        for i1 in 0..n {
            if !in_box(i1, box_k, &mut point) {
                continue;
            }
            for i2 in 0..n {
                if !in_box(i2, box_l, &mut point) {
                    continue;
                }
                for i3 in 0..n {
                    if !(in_box(i3, box_k, &mut point) && in_box(i3, box_l, &mut point)) {
                        continue;
                    }
                    sum += concordance_kernel(
                        sample.conditioned_value(i1, pair.a),
                        sample.conditioned_value(i1, pair.b),
                        sample.conditioned_value(i3, pair.a),
                        sample.conditioned_value(i3, pair.b),
                    ) * concordance_kernel(
                        sample.conditioned_value(i2, pair2.a),
                        sample.conditioned_value(i2, pair2.b),
                        sample.conditioned_value(i3, pair2.a),
                        sample.conditioned_value(i3, pair2.b),
                    );
                }
            }
        }
        sum / (n as u64 * nk * nl) as f64
    }

    #[test]
    fn i_hat_empty_box_errors() {
        let s = sample3(&[(1.0, 1.0, 0.0), (2.0, 2.0, 0.5), (3.0, 3.0, 1.0)]);
        let b = CondBox::interval(1, 0, 5.0, 6.0, false, false);
        let p = PairIndex::new(0, 1);
        assert!(matches!(i_hat(&s, p, p, &b), Err(Error::DegenerateBox { .. })));
    }

    #[test]
    fn i_hat_three_concordant_points_matches_27_term_enumeration() {
        let s = sample3(&[(1.0, 1.0, 0.0), (2.0, 2.0, 0.5), (3.0, 3.0, 1.0)]);
        let b = CondBox::full(1);
        let p = PairIndex::new(0, 1);
        let value = i_hat(&s, p, p, &b).unwrap();
        let oracle = i_hat_oracle(&s, p, p, &b, &b);
        assert_eq!(value, oracle);
    }

    #[test]
    fn i_hat_overlapping_boxes_matches_triple_loop() {
        let s = sample3(&[
            (1.0, 4.0, 0.1),
            (2.0, 2.5, 0.4),
            (3.0, 1.0, 0.6),
            (4.0, 3.0, 0.8),
            (0.5, 0.2, 0.95),
            (2.7, 3.3, 0.3),
        ]);
        let bk = CondBox::interval(1, 0, 0.0, 0.7, true, false);
        let bl = CondBox::interval(1, 0, 0.25, 1.0, false, false);
        let p = PairIndex::new(0, 1);
        let value = i_hat_overlap(&s, p, p, &bk, &bl).unwrap();
        let oracle = i_hat_oracle(&s, p, p, &bk, &bl);
        assert_eq!(value, oracle);
    }

    #[test]
    fn j_hat_disjoint_boxes_is_zero() {
        let s = sample3(&[(1.0, 1.0, 0.1), (2.0, 2.0, 0.4), (3.0, 3.0, 0.8)]);
        let bk = CondBox::interval(1, 0, 0.0, 0.5, false, false);
        let bl = CondBox::interval(1, 0, 0.5, 1.0, true, false);
        assert_eq!(j_hat(&s, PairIndex::new(0, 1), &bk, &bl).unwrap(), 0.0);
    }

    #[test]
    fn j_hat_universal_box_equals_d_over_p() {
        // D_{a,b,k} = p_k * J_{a,b,k,k} holds exactly in the empirical forms
        let s = sample3(&[(1.0, 1.0, 0.0), (2.0, 2.0, 0.5), (3.0, 3.0, 1.0)]);
        let b = CondBox::full(1);
        let p = PairIndex::new(0, 1);
        let j = j_hat(&s, p, &b, &b).unwrap();
        let d = d_hat(&s, p, &b);
        assert_eq!(j, d / 1.0);
        assert_eq!(j, 0.5);
    }

    #[test]
    fn j_hat_overlapping_boxes_matches_double_loop() {
        use crate::concordance::concordance_kernel;
        let pts = [
            (1.0, 4.0, 0.1),
            (2.0, 2.5, 0.4),
            (3.0, 1.0, 0.6),
            (4.0, 3.0, 0.8),
            (0.5, 0.2, 0.95),
            (2.7, 3.3, 0.3),
        ];
        let s = sample3(&pts);
        let bk = CondBox::interval(1, 0, 0.0, 0.7, true, false);
        let bl = CondBox::interval(1, 0, 0.25, 1.0, false, false);
        let p = PairIndex::new(0, 1);
        let in_k = |z: f64| z > 0.0 && z <= 0.7;
        let in_l = |z: f64| (0.25..=1.0).contains(&z);
        let mut sum = 0.0;
        let mut nk = 0u64;
        for &(_, _, z) in &pts {
            nk += in_k(z) as u64;
        }
        for &(xi, yi, zi) in &pts {
            if !in_k(zi) {
                continue;
            }
            for &(xj, yj, zj) in &pts {
                if !(in_k(zj) && in_l(zj)) {
                    continue;
                }
                sum += concordance_kernel(xi, yi, xj, yj);
            }
        }
        let oracle = sum / ((pts.len() as u64 - 1) * nk) as f64;
        assert_eq!(j_hat(&s, p, &bk, &bl).unwrap(), oracle);
    }

    #[test]
    fn disjoint_path_blocks_are_diagonal_and_symmetric() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random(), rng.random(), rng.random(), rng.random::<f64>()])
            .collect();
        let s = Sample::from_rows(rows, vec![0, 1, 2], vec![3], None).unwrap();
        let family = BoxFamily::new(
            vec![
                CondBox::interval(1, 0, f64::NEG_INFINITY, 0.5, false, false),
                CondBox::interval(1, 0, 0.5, f64::INFINITY, true, false),
            ],
            true,
        );
        let est = delta_hat(&s, &family).unwrap();
        assert!(est.disjoint_path);
        assert!(est.is_symmetric());
        for pi in 0..est.pair_count {
            for pj in 0..est.pair_count {
                for k in 0..est.m {
                    for l in 0..est.m {
                        if k != l {
                            assert_eq!(est.entry(pi * est.m + k, pj * est.m + l), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn general_path_on_disjoint_boxes_has_zero_cross_blocks() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random(), rng.random(), rng.random::<f64>()])
            .collect();
        let s = Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap();
        let family = BoxFamily::new(
            vec![
                CondBox::interval(1, 0, f64::NEG_INFINITY, 0.5, false, false),
                CondBox::interval(1, 0, 0.5, f64::INFINITY, true, false),
            ],
            true,
        );
        let est = delta_hat_with_path(&s, &family, false).unwrap();
        assert!(!est.disjoint_path);
        assert!(est.is_symmetric());
        assert_eq!(est.entry(0, 1), 0.0);
        assert_eq!(est.entry(1, 0), 0.0);
    }
}
