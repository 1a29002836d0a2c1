//! Row permutation of the unmixing matrix and extraction of direct effects.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ConnectionMatrix;

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns `col[i]`, the column assigned to row `i`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert!(cost.is_square(), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        col[row_of_col[j] - 1] = j - 1;
    }
    col
}

/// Finds the row permutation of `w` minimising `sum_i 1/|w~_ii|`.
///
/// Returns `(rows, w_permuted)` where row `i` of `w_permuted` is row
/// `rows[i]` of `w`.
pub fn permute_rows_nonzero_diag(w: &DMatrix<f64>) -> Result<(Vec<usize>, DMatrix<f64>)> {
    if !w.is_square() {
        return Err(Error::InvalidArgument(
            "unmixing matrix must be square".into(),
        ));
    }
    let m = w.nrows();
    // Zero entries get a cost larger than any all-finite assignment.
    let max_finite = w
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| 1.0 / v.abs())
        .fold(0.0, f64::max);
    if !max_finite.is_finite() {
        return Err(Error::InvalidArgument(
            "unmixing matrix entries too small to invert".into(),
        ));
    }
    let forbidden = 2.0 * (m as f64 + 1.0) * (max_finite + 1.0);
    // cost[(i, r)]: placing row r of w at diagonal position i
    let cost = DMatrix::from_fn(m, m, |i, r| {
        let v = w[(r, i)];
        if v == 0.0 {
            forbidden
        } else {
            1.0 / v.abs()
        }
    });
    let rows = hungarian(&cost);
    if rows.iter().enumerate().any(|(i, &r)| w[(r, i)] == 0.0) {
        return Err(Error::DegeneratePermutation);
    }
    let permuted = DMatrix::from_fn(m, m, |i, j| w[(rows[i], j)]);
    Ok((rows, permuted))
}

/// Normalises each row to a unit diagonal and returns `I - W'`.
pub fn estimate_b(w_permuted: &DMatrix<f64>) -> Result<ConnectionMatrix> {
    let m = w_permuted.nrows();
    if !w_permuted.is_square() {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        let d = w_permuted[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::SingularMatrix(format!(
                "zero diagonal entry at row {i}"
            )));
        }
        for j in (0..m).filter(|&j| j != i) {
            b[(i, j)] = -w_permuted[(i, j)] / d;
        }
    }
    ConnectionMatrix::new(b)
}
