//! Contrast matrices and the test statistics built on the stacked tau vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chisq::chisq_survival;
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::estimators::TauEstimates;
use crate::linalg::{rank, solve_symmetric_pivoted};

/// Testing procedure tag carried by every result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wald,
    BootInfClassical,
    BootL2Classical,
    BootInfConditional,
    BootL2Conditional,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Wald,
        Method::BootInfClassical,
        Method::BootL2Classical,
        Method::BootInfConditional,
        Method::BootL2Conditional,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Wald => "wald",
            Method::BootInfClassical => "boot_inf_classical",
            Method::BootL2Classical => "boot_l2_classical",
            Method::BootInfConditional => "boot_inf_conditional",
            Method::BootL2Conditional => "boot_l2_conditional",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "wald" => Ok(Method::Wald),
            "boot_inf_classical" => Ok(Method::BootInfClassical),
            "boot_l2_classical" => Ok(Method::BootL2Classical),
            "boot_inf_conditional" => Ok(Method::BootInfConditional),
            "boot_l2_conditional" => Ok(Method::BootL2Conditional),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Outcome of one testing procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    pub p_value: f64,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Sparse ±1 contrast matrix. Each row holds exactly one +1 (column `plus`)
/// and one -1 (column `minus`); rows are independent by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastMatrix {
    pub rows: usize,
    pub cols: usize,
    /// (k_i, l_i) per row: +1 at k_i, -1 at l_i.
    pub row_pairs: Vec<(usize, usize)>,
}

impl ContrastMatrix {
    pub fn from_pairs(cols: usize, row_pairs: Vec<(usize, usize)>) -> Result<Self> {
        for &(k, l) in &row_pairs {
            if k >= cols || l >= cols || k == l {
                return Err(Error::invalid(format!("bad contrast row ({k}, {l}) for {cols} columns")));
            }
        }
        Ok(ContrastMatrix {
            rows: row_pairs.len(),
            cols,
            row_pairs,
        })
    }

    /// Applies the contrast: out_i = v[k_i] - v[l_i].
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "contrast width must match vector length");
        self.row_pairs.iter().map(|&(k, l)| v[k] - v[l]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.rows, self.cols);
        for (i, &(k, l)) in self.row_pairs.iter().enumerate() {
            t[(i, k)] = 1.0;
            t[(i, l)] = -1.0;
        }
        t
    }

    pub fn numeric_rank(&self) -> usize {
        rank(&self.to_dense(), 1e-10)
    }
}

/// T = [1_{m-1} : -I_{m-1}], the default contrast comparing box 1 to every
/// other box; rank m - 1.
pub fn default_contrast(m: usize) -> Result<ContrastMatrix> {
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 boxes for a contrast, got {m}")));
    }
    ContrastMatrix::from_pairs(m, (1..m).map(|l| (0, l)).collect())
}

/// T_e = I_{p(p-1)/2} ⊗ T: block-diagonal copies of the default contrast,
/// one per conditioned pair; rank (m-1)p(p-1)/2.
pub fn extended_contrast(m: usize, p: usize) -> Result<ContrastMatrix> {
    if p < 2 {
        return Err(Error::invalid(format!("need at least 2 conditioned variables, got {p}")));
    }
    let base = default_contrast(m)?;
    let blocks = p * (p - 1) / 2;
    let mut row_pairs = Vec::with_capacity(blocks * base.rows);
    for block in 0..blocks {
        let offset = block * m;
        for &(k, l) in &base.row_pairs {
            row_pairs.push((offset + k, offset + l));
        }
    }
    ContrastMatrix::from_pairs(blocks * m, row_pairs)
}

/// Wald statistic n W' T' (T Δ̂ T')^{-1} T W with W the raw stacked tau
/// vector; under the null the contrast annihilates the common value, so no
/// centering is required. Chi-squared reference with rank(T) degrees of
/// freedom.
pub fn wald_statistic(
    tau: &TauEstimates,
    delta: &CovarianceEstimate,
    contrast: &ContrastMatrix,
) -> Result<TestResult> {
    wald_statistic_opts(tau, delta, contrast, false)
}

/// Same, with an opt-in ridge fallback: on a singular contrasted covariance,
/// retries with eps * trace/size added to the diagonal (eps = 1e-8) instead
/// of failing.
pub fn wald_statistic_opts(
    tau: &TauEstimates,
    delta: &CovarianceEstimate,
    contrast: &ContrastMatrix,
    ridge: bool,
) -> Result<TestResult> {
    let dim = tau.stacked().len();
    if delta.dim != dim || contrast.cols != dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: tau stack {dim}, covariance {}, contrast columns {}",
            delta.dim, contrast.cols
        )));
    }
    let contrasted = contrast.apply(tau.stacked());
    let v = DVector::from_column_slice(&contrasted);

    // M = T Δ̂ T' assembled from the sparse row pairs
    let q = contrast.rows;
    let mut m_mat = DMatrix::zeros(q, q);
    for (i, &(ki, li)) in contrast.row_pairs.iter().enumerate() {
        for (j, &(kj, lj)) in contrast.row_pairs.iter().enumerate() {
            m_mat[(i, j)] = delta.entry(ki, kj) - delta.entry(ki, lj) - delta.entry(li, kj)
                + delta.entry(li, lj);
        }
    }

    let solved = match solve_symmetric_pivoted(&m_mat, &v) {
        Ok(x) => x,
        Err(Error::SingularMatrix { .. }) if ridge => {
            let eps = 1e-8 * m_mat.trace() / q as f64;
            let mut ridged = m_mat.clone();
            for i in 0..q {
                ridged[(i, i)] += eps;
            }
            solve_symmetric_pivoted(&ridged, &v)?
        }
        Err(e) => return Err(e),
    };

    let raw = tau.n as f64 * v.dot(&solved);
    if !raw.is_finite() {
        return Err(Error::NonFinite("wald statistic".into()));
    }
    // an indefinite finite-sample covariance estimate can push the
    // quadratic form below zero; the statistic is zero there
    let statistic = raw.max(0.0);
    let df = q;
    let p_value = chisq_survival(statistic, df)?;
    Ok(TestResult {
        method: Method::Wald,
        statistic,
        df: Some(df),
        p_value,
        m: tau.m,
        p: tau.conditioned_dim(),
        n: tau.n,
        b: None,
        seed: None,
    })
}

/// T_inf = |sqrt(n) T_e W|_inf, the maximal absolute contrasted deviation.
pub fn stat_inf(tau: &TauEstimates, contrast: &ContrastMatrix) -> f64 {
    let root_n = (tau.n as f64).sqrt();
    contrast
        .apply(tau.stacked())
        .iter()
        .fold(0.0f64, |acc, &v| acc.max((root_n * v).abs()))
}

/// T_2 = n W' T_e' T_e W, the squared Euclidean norm of sqrt(n) T_e W.
pub fn stat_l2(tau: &TauEstimates, contrast: &ContrastMatrix) -> f64 {
    let n = tau.n as f64;
    contrast
        .apply(tau.stacked())
        .iter()
        .map(|&v| n * v * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceEstimate;
    use crate::pair::all_pairs;

    fn fake_tau(taus: Vec<f64>, m: usize, p: usize, n: usize) -> TauEstimates {
        let pairs = all_pairs(p);
        assert_eq!(taus.len(), pairs.len() * m);
        let cells = taus.len();
        TauEstimates {
            pairs,
            m,
            n,
            taus,
            variants: None,
            counts: vec![n / m; m],
            p_hat: vec![1.0 / m as f64; m],
            s_n: vec![m as f64 / n as f64; m],
            concordant: vec![0; cells],
            discordant: vec![0; cells],
        }
    }

    #[test]
    fn default_contrast_m2_and_m4() {
        let t2 = default_contrast(2).unwrap().to_dense();
        assert_eq!(t2.as_slice(), &[1.0, -1.0]);
        let t4 = default_contrast(4).unwrap().to_dense();
        let printed = DMatrix::from_row_slice(3, 4, &[
            1.0, -1.0, 0.0, 0.0,
            1.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, -1.0,
        ]);
        assert_eq!(t4, printed);
        assert!(default_contrast(1).is_err());
    }

    #[test]
    fn default_contrast_rank_by_elimination() {
        assert_eq!(default_contrast(5).unwrap().numeric_rank(), 4);
    }

    #[test]
    fn extended_contrast_shapes_and_rank() {
        // p = 2 degenerates to the base contrast
        let single = extended_contrast(4, 2).unwrap();
        assert_eq!(single.to_dense(), default_contrast(4).unwrap().to_dense());
        // m = 2, p = 3: 3x6 block diagonal of [1, -1]
        let t = extended_contrast(2, 3).unwrap().to_dense();
        let expected = DMatrix::from_row_slice(3, 6, &[
            1.0, -1.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, -1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0, -1.0,
        ]);
        assert_eq!(t, expected);
        // m = 4, p = 3: rank 9, the chi-squared df of the extended test
        assert_eq!(extended_contrast(4, 3).unwrap().numeric_rank(), 9);
    }

    #[test]
    fn constant_tau_vector_gives_zero_statistics() {
        let tau = fake_tau(vec![0.3; 4], 4, 2, 100);
        let contrast = extended_contrast(4, 2).unwrap();
        assert_eq!(stat_inf(&tau, &contrast), 0.0);
        assert_eq!(stat_l2(&tau, &contrast), 0.0);
        let delta = CovarianceEstimate::identity_for_test(4);
        let res = wald_statistic(&tau, &delta, &contrast).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn two_box_arithmetic() {
        // m=2, p=2, tau = (0.3, 0.1), n = 100: T_inf = 2.0, T_2 = 4.0
        let tau = fake_tau(vec![0.3, 0.1], 2, 2, 100);
        let contrast = extended_contrast(2, 2).unwrap();
        assert!((stat_inf(&tau, &contrast) - 2.0).abs() < 1e-12);
        assert!((stat_l2(&tau, &contrast) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn l2_equals_squared_norm_of_contrasted_vector() {
        let tau = fake_tau(vec![0.25, -0.1, 0.4, 0.05, 0.0, -0.3], 2, 3, 57);
        let contrast = extended_contrast(2, 3).unwrap();
        let v = contrast.apply(tau.stacked());
        let manual: f64 = v.iter().map(|x| 57.0 * x * x).sum();
        assert!((stat_l2(&tau, &contrast) - manual).abs() < 1e-12);
    }

    #[test]
    fn wald_matches_hand_quadratic_form() {
        // hand-built W and diagonal Δ̂, m = 4, p = 2, contrast rows 3
        let taus = vec![0.5, 0.3, 0.2, 0.1];
        let tau = fake_tau(taus.clone(), 4, 2, 50);
        let diag = vec![2.0, 1.0, 0.5, 0.25];
        let delta = CovarianceEstimate::diagonal_for_test(diag.clone());
        let contrast = default_contrast(4).unwrap();
        let res = wald_statistic(&tau, &delta, &contrast).unwrap();

        // oracle: 3x3 quadratic form solved by hand-coded Cramer elimination
        let v: Vec<f64> = (1..4).map(|l| taus[0] - taus[l]).collect();
        let mut m_mat = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m_mat[i][j] = diag[0] + if i == j { diag[i + 1] } else { 0.0 };
            }
        }
        // solve 3x3 via explicit inverse (adjugate)
        let a = m_mat;
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let mut inv = [[0.0f64; 3]; 3];
        inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
        inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
        inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
        inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
        inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
        inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
        inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
        inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
        inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += v[i] * inv[i][j] * v[j];
            }
        }
        let oracle = 50.0 * quad;
        assert!((res.statistic - oracle).abs() < 1e-9 * oracle.max(1.0));
        assert_eq!(res.df, Some(3));
    }

    #[test]
    fn wald_invariant_under_column_permutation_of_contrast() {
        let taus = vec![0.42, 0.31, 0.18, 0.05];
        let tau = fake_tau(taus, 4, 2, 80);
        let delta = CovarianceEstimate::diagonal_for_test(vec![1.5, 1.0, 0.7, 0.9]);
        let base = default_contrast(4).unwrap();
        // column permutation sigma = (2 0 3 1): same row space
        let sigma = [2usize, 0, 3, 1];
        let permuted = ContrastMatrix::from_pairs(
            4,
            base.row_pairs.iter().map(|&(k, l)| (sigma[k], sigma[l])).collect(),
        )
        .unwrap();
        let s1 = wald_statistic(&tau, &delta, &base).unwrap().statistic;
        let s2 = wald_statistic(&tau, &delta, &permuted).unwrap().statistic;
        assert!((s1 - s2).abs() <= 1e-8 * s1.abs().max(1.0));
    }

    #[test]
    fn singular_covariance_errors_unless_ridge() {
        let tau = fake_tau(vec![0.4, 0.2], 2, 2, 30);
        let delta = CovarianceEstimate::diagonal_for_test(vec![0.0, 0.0]);
        let contrast = default_contrast(2).unwrap();
        assert!(matches!(
            wald_statistic(&tau, &delta, &contrast),
            Err(Error::SingularMatrix { .. })
        ));
        // ridge keeps the run alive (statistic is huge, p tiny, but finite)
        let ridged = wald_statistic_opts(&tau, &delta, &contrast, true);
        assert!(ridged.is_err() || ridged.unwrap().statistic.is_finite());
    }
}
