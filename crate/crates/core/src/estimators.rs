//! Conditional Kendall's tau estimators per (pair, box).
//!
//! All four variants are exact functions of the integer concordant and
//! discordant counts on the box subsample, computed with uniform weights
//! w = 1/N_k over box members. The rescaled variant coincides with the
//! classical Kendall's tau of the subsample and is the default everywhere
//! downstream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{members, BoxFamily, CondBox};
use crate::concordance::{count_pairs, pair_columns};
use crate::error::{Error, Result};
use crate::pair::{all_pairs, PairIndex};
use crate::sample::Sample;

/// Estimator variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    V1,
    V2,
    V3,
    Rescaled,
}

/// τ̂ estimates for every (pair, box) cell, with the box occupancy data the
/// covariance and test layers reuse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauEstimates {
    pub pairs: Vec<PairIndex>,
    pub m: usize,
    pub n: usize,
    /// Rescaled τ̂, pair-major: entry `pair_idx * m + k`.
    pub taus: Vec<f64>,
    /// Unrescaled variants (same layout), populated on request.
    pub variants: Option<TauVariantValues>,
    /// N_{k,n} per box.
    pub counts: Vec<usize>,
    /// p̂_k = N_{k,n} / n.
    pub p_hat: Vec<f64>,
    /// s_n^(k) = 1/N_{k,n} under uniform weights.
    pub s_n: Vec<f64>,
    /// Concordant/discordant counts per cell, pair-major. These are the
    /// integer sufficient statistics for every estimator variant.
    pub concordant: Vec<u64>,
    pub discordant: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauVariantValues {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
}

impl TauEstimates {
    #[inline]
    pub fn tau(&self, pair_idx: usize, k: usize) -> f64 {
        self.taus[pair_idx * self.m + k]
    }

    /// The stacked vector (pair-major, box-minor) the tests consume.
    pub fn stacked(&self) -> &[f64] {
        &self.taus
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Number of conditioned variables behind the pair list.
    pub fn conditioned_dim(&self) -> usize {
        self.pairs.iter().map(|pair| pair.b + 1).max().unwrap_or(0)
    }
}

pub(crate) struct CellCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub n_sub: usize,
}

pub(crate) fn cell_counts(sample: &Sample, rows: &[usize], pair: PairIndex) -> CellCounts {
    let (xs, ys) = pair_columns(sample, rows, pair);
    let (concordant, discordant) = count_pairs(&xs, &ys);
    CellCounts {
        concordant,
        discordant,
        n_sub: rows.len(),
    }
}

fn variant_value(counts: &CellCounts, variant: TauVariant) -> f64 {
    let n = counts.n_sub as f64;
    let c = counts.concordant as f64;
    let d = counts.discordant as f64;
    match variant {
        TauVariant::V1 => 4.0 * c / (n * n) - 1.0,
        TauVariant::V2 => 2.0 * (c - d) / (n * n),
        TauVariant::V3 => 1.0 - 4.0 * d / (n * n),
        // rescaled: v2 / (1 - s_n) with s_n = 1/N, i.e. the classical
        // subsample Kendall's tau (c - d) / (N(N-1)/2), computed in one
        // division for exactness.
        TauVariant::Rescaled => {
            (c - d) / ((counts.n_sub * (counts.n_sub - 1) / 2) as f64)
        }
    }
}

/// τ̂ of one pair on one box.
pub fn tau_pair_box(
    sample: &Sample,
    pair: PairIndex,
    cond_box: &CondBox,
    variant: TauVariant,
) -> Result<f64> {
    let rows = members(sample, cond_box);
    if rows.len() < 2 {
        return Err(Error::InsufficientSubsample {
            box_index: None,
            count: rows.len(),
        });
    }
    Ok(variant_value(&cell_counts(sample, &rows, pair), variant))
}

/// D̂_{a,b,k}: the paper-normalized pair-count U-statistic
/// `(1/(n(n-1))) Σ_{i≠j} 1{X_{i,a}<X_{j,a}, X_{i,b}<X_{j,b}, both rows in box}`.
/// The numerator equals the concordant count of the box subsample.
pub fn d_hat(sample: &Sample, pair: PairIndex, cond_box: &CondBox) -> f64 {
    let rows = members(sample, cond_box);
    d_hat_from_counts(sample.n(), cell_counts(sample, &rows, pair).concordant)
}

#[inline]
pub(crate) fn d_hat_from_counts(n: usize, concordant: u64) -> f64 {
    concordant as f64 / ((n * (n - 1)) as f64)
}

/// Fills the whole (pair x box) grid. Boxes are evaluated in parallel;
/// results are assembled in box order so the output is independent of the
/// worker count.
pub fn tau_matrix(sample: &Sample, family: &BoxFamily) -> Result<TauEstimates> {
    tau_matrix_opts(sample, family, false)
}

pub fn tau_matrix_opts(
    sample: &Sample,
    family: &BoxFamily,
    with_variants: bool,
) -> Result<TauEstimates> {
    family.validate_dim(sample.conditioning_dim())?;
    let member_lists: Vec<Vec<usize>> = family
        .boxes
        .iter()
        .map(|b| members(sample, b))
        .collect();
    tau_matrix_with_members(sample, &member_lists, with_variants)
}

/// Core grid evaluation on precomputed member lists (reused by the bootstrap
/// engine, which recomputes memberships per resample).
pub(crate) fn tau_matrix_with_members(
    sample: &Sample,
    member_lists: &[Vec<usize>],
    with_variants: bool,
) -> Result<TauEstimates> {
    let m = member_lists.len();
    let n = sample.n();
    for (k, rows) in member_lists.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::InsufficientSubsample {
                box_index: Some(k),
                count: rows.len(),
            });
        }
    }
    let pairs = all_pairs(sample.conditioned_dim());
    let cells: Vec<Vec<CellCounts>> = member_lists
        .par_iter()
        .map(|rows| {
            pairs
                .iter()
                .map(|&pair| cell_counts(sample, rows, pair))
                .collect()
        })
        .collect();

    let mut taus = vec![0.0; pairs.len() * m];
    let mut concordant = vec![0u64; pairs.len() * m];
    let mut discordant = vec![0u64; pairs.len() * m];
    let mut variants = with_variants.then(|| TauVariantValues {
        v1: vec![0.0; pairs.len() * m],
        v2: vec![0.0; pairs.len() * m],
        v3: vec![0.0; pairs.len() * m],
    });
    for (k, per_box) in cells.iter().enumerate() {
        for (pair_idx, counts) in per_box.iter().enumerate() {
            let at = pair_idx * m + k;
            taus[at] = variant_value(counts, TauVariant::Rescaled);
            concordant[at] = counts.concordant;
            discordant[at] = counts.discordant;
            if let Some(v) = variants.as_mut() {
                v.v1[at] = variant_value(counts, TauVariant::V1);
                v.v2[at] = variant_value(counts, TauVariant::V2);
                v.v3[at] = variant_value(counts, TauVariant::V3);
            }
        }
    }
    let counts: Vec<usize> = member_lists.iter().map(|r| r.len()).collect();
    let p_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let s_n: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    Ok(TauEstimates {
        pairs,
        m,
        n,
        taus,
        variants,
        counts,
        p_hat,
        s_n,
        concordant,
        discordant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::CondBox;

    fn sample_from_pairs(points: &[(f64, f64)]) -> Sample {
        let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y, 0.0]).collect();
        Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap()
    }

    #[test]
    fn perfectly_concordant_subsample_has_tau_one() {
        let s = sample_from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let b = CondBox::full(1);
        let tau = tau_pair_box(&s, PairIndex::new(0, 1), &b, TauVariant::Rescaled).unwrap();
        assert_eq!(tau, 1.0);
    }

    #[test]
    fn single_discordant_pair() {
        let s = sample_from_pairs(&[(1.0, 2.0), (2.0, 1.0)]);
        let b = CondBox::full(1);
        let pair = PairIndex::new(0, 1);
        assert_eq!(tau_pair_box(&s, pair, &b, TauVariant::Rescaled).unwrap(), -1.0);
        // tau^(2) = -1/2 and s = 1/2 at N = 2
        assert_eq!(tau_pair_box(&s, pair, &b, TauVariant::V2).unwrap(), -0.5);
    }

    #[test]
    fn five_point_enumeration() {
        // all 10 pairs enumerated by hand: 7 concordant, 3 discordant
        let s = sample_from_pairs(&[(1.0, 3.0), (2.0, 1.0), (3.0, 4.0), (4.0, 2.0), (5.0, 5.0)]);
        let b = CondBox::full(1);
        let tau = tau_pair_box(&s, PairIndex::new(0, 1), &b, TauVariant::Rescaled).unwrap();
        assert!((tau - 0.4).abs() < 1e-15);
    }

    #[test]
    fn undersized_box_is_an_error_with_count() {
        let s = sample_from_pairs(&[(1.0, 2.0), (2.0, 1.0), (3.0, 1.5)]);
        let b = CondBox::interval(1, 0, 1.0, 2.0, false, false); // no member
        match tau_pair_box(&s, PairIndex::new(0, 1), &b, TauVariant::Rescaled) {
            Err(Error::InsufficientSubsample { count, .. }) => assert_eq!(count, 0),
            other => panic!("expected insufficient subsample, got {other:?}"),
        }
    }

    #[test]
    fn identity_chain_on_tie_free_data() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.random_range(3..40);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let s = sample_from_pairs(&pts);
            let b = CondBox::full(1);
            let pair = PairIndex::new(0, 1);
            let v1 = tau_pair_box(&s, pair, &b, TauVariant::V1).unwrap();
            let v2 = tau_pair_box(&s, pair, &b, TauVariant::V2).unwrap();
            let v3 = tau_pair_box(&s, pair, &b, TauVariant::V3).unwrap();
            let resc = tau_pair_box(&s, pair, &b, TauVariant::Rescaled).unwrap();
            let sn = 1.0 / n as f64;
            assert!((v1 + sn - v2).abs() < 1e-14);
            assert!((v3 - sn - v2).abs() < 1e-14);
            assert!((v2 / (1.0 - sn) - resc).abs() < 1e-13);
            // range constraints
            assert!(v1 >= -1.0 - 1e-15 && v1 <= 1.0 - 2.0 * sn + 1e-15);
            assert!(v2 >= -1.0 + sn - 1e-15 && v2 <= 1.0 - sn + 1e-15);
            assert!(v3 >= -1.0 + 2.0 * sn - 1e-15 && v3 <= 1.0 + 1e-15);
            assert!((-1.0..=1.0).contains(&resc));
        }
    }

    #[test]
    fn d_hat_concordant_three_points_is_half() {
        let s = sample_from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let b = CondBox::full(1);
        assert_eq!(d_hat(&s, PairIndex::new(0, 1), &b), 0.5);
    }

    #[test]
    fn d_hat_empty_box_is_zero() {
        let s = sample_from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let b = CondBox::interval(1, 0, 5.0, 6.0, false, false);
        assert_eq!(d_hat(&s, PairIndex::new(0, 1), &b), 0.0);
    }

    #[test]
    fn d_hat_four_points_with_box_matches_double_loop() {
        let rows = vec![
            vec![1.0, 4.0, 0.2],
            vec![2.0, 2.0, 0.8],
            vec![3.0, 3.0, 0.5],
            vec![4.0, 1.0, 1.4],
        ];
        let s = Sample::from_rows(rows.clone(), vec![0, 1], vec![2], None).unwrap();
        let b = CondBox::interval(1, 0, 0.0, 1.0, true, false);
        // oracle: literal O(n^2) double loop over ordered pairs
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let in_box = |r: usize| rows[r][2] > 0.0 && rows[r][2] <= 1.0;
                if rows[i][0] < rows[j][0] && rows[i][1] < rows[j][1] && in_box(i) && in_box(j) {
                    acc += 1.0;
                }
            }
        }
        let oracle = acc / (4.0 * 3.0);
        assert_eq!(d_hat(&s, PairIndex::new(0, 1), &b), oracle);
    }

    #[test]
    fn tau_matrix_single_box_matches_classical_tau() {
        let s = sample_from_pairs(&[(1.0, 3.0), (2.0, 1.0), (3.0, 4.0), (4.0, 2.0), (5.0, 5.0)]);
        let family = BoxFamily::new(vec![CondBox::full(1)], true);
        let est = tau_matrix(&s, &family).unwrap();
        assert_eq!(est.m, 1);
        assert_eq!(est.pair_count(), 1);
        assert!((est.tau(0, 0) - 0.4).abs() < 1e-15);
        assert_eq!(est.counts, vec![5]);
    }
}
