//! Minimal dense linear algebra for the small systems that show up in the
//! dual solvers: Gaussian elimination with partial pivoting and Jacobi
//! eigenvalues for symmetric matrices.

use crate::scalar::{cast, Scalar};

/// Solves `A x = b` in place; `None` when a pivot degenerates.
pub(crate) fn solve_linear<F: Scalar>(mut a: Vec<Vec<F>>, mut b: Vec<F>) -> Option<Vec<F>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if pivot_abs < cast(1e-250) {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor == F::zero() {
                continue;
            }
            for c in col..n {
                let upd = a[col][c] * factor;
                a[r][c] = a[r][c] - upd;
            }
            b[r] = b[r] - b[col] * factor;
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc = acc - a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues<F: Scalar>(m: &[Vec<F>]) -> Vec<F> {
    let n = m.len();
    let mut a: Vec<Vec<F>> = m.to_vec();
    for _sweep in 0..100 {
        let mut off = F::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < cast(1e-14) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < cast(1e-300) {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (cast::<F>(2.0) * a[p][q]);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = (t * t + F::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}
