//! Linear assignment via the Hungarian method with row/column potentials,
//! O(n³).

use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("assignment needs a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("non-finite score at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Returns `perm` with `perm[row] = col` optimizing `Σ scores[row, perm[row]]`.
pub fn solve_assignment(scores: &Matrix, maximize: bool) -> Result<Vec<usize>, AssignmentError> {
    let n = scores.rows();
    if scores.cols() != n {
        return Err(AssignmentError::NonSquare {
            rows: n,
            cols: scores.cols(),
        });
    }
    for row in 0..n {
        for col in 0..n {
            if !scores.get(row, col).is_finite() {
                return Err(AssignmentError::NonFinite { row, col });
            }
        }
    }
    let cost = |i: usize, j: usize| {
        let s = scores.get(i, j);
        if maximize {
            -s
        } else {
            s
        }
    };

    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    Ok(perm)
}
