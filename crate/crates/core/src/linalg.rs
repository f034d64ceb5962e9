//! Small dense linear-algebra helpers for the Wald layer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot-ratio threshold below which a symmetric factorization is declared
/// singular instead of being silently regularized.
pub const PIVOT_TOL: f64 = 1e-12;

enum Pivot {
    One(usize),
    Two(usize),
}

/// Solves `A x = b` for symmetric A (definite or not) by the Bunch-Kaufman
/// LDL^T factorization with symmetric partial pivoting (1x1 and 2x2 pivot
/// blocks). Fails with a singular-matrix error when a pivot falls below
/// `PIVOT_TOL` relative to the matrix scale; callers decide whether to retry
/// with a ridge term. Plug-in covariance estimates can be indefinite in
/// finite samples, which a definite-only factorization would misreport as
/// singular.
pub fn solve_symmetric_pivoted(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let singular = || Error::SingularMatrix { pivot_tol: PIVOT_TOL };

    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(singular());
    }
    let tol = PIVOT_TOL * scale;

    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pivots: Vec<Pivot> = Vec::new();
    let alpha = (1.0 + 17.0f64.sqrt()) / 8.0;

    let mut k = 0;
    while k < n {
        // largest off-diagonal magnitude in column k at or below the diagonal
        let (mut r, mut lambda) = (k, 0.0f64);
        for i in (k + 1)..n {
            if m[(i, k)].abs() > lambda {
                lambda = m[(i, k)].abs();
                r = i;
            }
        }
        let akk = m[(k, k)].abs();
        let use_two = if lambda == 0.0 || akk >= alpha * lambda {
            false
        } else {
            let mut sigma = 0.0f64;
            for i in k..n {
                if i != r {
                    sigma = sigma.max(m[(i, r)].abs());
                }
            }
            if akk * sigma >= alpha * lambda * lambda {
                false
            } else if m[(r, r)].abs() >= alpha * sigma {
                swap_sym(&mut m, &mut perm, k, r);
                false
            } else {
                swap_sym(&mut m, &mut perm, k + 1, r);
                true
            }
        };

        if !use_two {
            let d = m[(k, k)];
            if d.abs() <= tol {
                return Err(singular());
            }
            let column: Vec<f64> = ((k + 1)..n).map(|i| m[(i, k)]).collect();
            for i in (k + 1)..n {
                let l = column[i - k - 1] / d;
                for j in (k + 1)..=i {
                    let delta = l * column[j - k - 1];
                    m[(i, j)] -= delta;
                    if i != j {
                        m[(j, i)] -= delta;
                    }
                }
                m[(i, k)] = l;
                m[(k, i)] = l;
            }
            pivots.push(Pivot::One(k));
            k += 1;
        } else {
            let (d11, d21, d22) = (m[(k, k)], m[(k + 1, k)], m[(k + 1, k + 1)]);
            let det = d11 * d22 - d21 * d21;
            if det.abs() <= tol * tol {
                return Err(singular());
            }
            let col1: Vec<f64> = ((k + 2)..n).map(|i| m[(i, k)]).collect();
            let col2: Vec<f64> = ((k + 2)..n).map(|i| m[(i, k + 1)]).collect();
            for i in (k + 2)..n {
                let (b1, b2) = (col1[i - k - 2], col2[i - k - 2]);
                let l1 = (b1 * d22 - b2 * d21) / det;
                let l2 = (b2 * d11 - b1 * d21) / det;
                for j in (k + 2)..=i {
                    let delta = l1 * col1[j - k - 2] + l2 * col2[j - k - 2];
                    m[(i, j)] -= delta;
                    if i != j {
                        m[(j, i)] -= delta;
                    }
                }
                m[(i, k)] = l1;
                m[(k, i)] = l1;
                m[(i, k + 1)] = l2;
                m[(k + 1, i)] = l2;
            }
            pivots.push(Pivot::Two(k));
            k += 2;
        }
    }

    // P A P' = L D L': solve through the permuted right-hand side
    let mut y = DVector::zeros(n);
    for i in 0..n {
        y[i] = b[perm[i]];
    }
    // forward: L z = P b, unit lower L with block-structured columns
    for pivot in &pivots {
        match *pivot {
            Pivot::One(k) => {
                for i in (k + 1)..n {
                    y[i] -= m[(i, k)] * y[k];
                }
            }
            Pivot::Two(k) => {
                for i in (k + 2)..n {
                    y[i] -= m[(i, k)] * y[k] + m[(i, k + 1)] * y[k + 1];
                }
            }
        }
    }
    // diagonal blocks
    for pivot in &pivots {
        match *pivot {
            Pivot::One(k) => y[k] /= m[(k, k)],
            Pivot::Two(k) => {
                let (d11, d21, d22) = (m[(k, k)], m[(k + 1, k)], m[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                let (b1, b2) = (y[k], y[k + 1]);
                y[k] = (b1 * d22 - b2 * d21) / det;
                y[k + 1] = (b2 * d11 - b1 * d21) / det;
            }
        }
    }
    // backward: L' w = z
    for pivot in pivots.iter().rev() {
        match *pivot {
            Pivot::One(k) => {
                let mut acc = y[k];
                for i in (k + 1)..n {
                    acc -= m[(i, k)] * y[i];
                }
                y[k] = acc;
            }
            Pivot::Two(k) => {
                let (mut acc0, mut acc1) = (y[k], y[k + 1]);
                for i in (k + 2)..n {
                    acc0 -= m[(i, k)] * y[i];
                    acc1 -= m[(i, k + 1)] * y[i];
                }
                y[k] = acc0;
                y[k + 1] = acc1;
            }
        }
    }
    let mut x = DVector::zeros(n);
    for i in 0..n {
        x[perm[i]] = y[i];
    }
    Ok(x)
}

fn swap_sym(m: &mut DMatrix<f64>, perm: &mut [usize], i: usize, j: usize) {
    if i != j {
        m.swap_rows(i, j);
        m.swap_columns(i, j);
        perm.swap(i, j);
    }
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let mut m = a.clone();
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut rank = 0;
    let mut col = 0;
    while rank < rows && col < cols {
        let (pivot_row, pivot) = (rank..rows)
            .map(|r| (r, m[(r, col)].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot <= tol * scale {
            col += 1;
            continue;
        }
        m.swap_rows(rank, pivot_row);
        for r in (rank + 1)..rows {
            let f = m[(r, col)] / m[(rank, col)];
            for c in col..cols {
                m[(r, c)] -= f * m[(rank, c)];
            }
        }
        rank += 1;
        col += 1;
    }
    rank
}
