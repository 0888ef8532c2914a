use crate::error::{Error, Result};
use crate::matrix::{norm2, DenseMatrix, Vector};

use super::linalg::least_squares;
use super::{check_measurements, constraint_residual, SolveResult, SolveStatus};

/// Column limit for exhaustive search.
pub const L0_MAX_COLUMNS: usize = 24;

const FEASIBLE: f64 = 1e-8;

/// Sparsest exact solution of `A theta = y` with at most `max_sparsity`
/// nonzeros, found by trying every support in order of size. Among feasible
/// supports of the smallest size, the lower residual wins, then the
/// lexicographically smaller support.
pub fn l0_bruteforce(a: &DenseMatrix, y: &[f64], max_sparsity: usize) -> Result<SolveResult> {
    check_measurements("l0_bruteforce", a, y)?;
    let n = a.cols();
    if n > L0_MAX_COLUMNS {
        return Err(Error::TooLarge {
            cols: n,
            limit: L0_MAX_COLUMNS,
        });
    }
    if max_sparsity > n {
        return Err(Error::InvalidArgument(format!(
            "max_sparsity {max_sparsity} exceeds column count {n}"
        )));
    }
    let scale = norm2(y).max(1.0);
    if norm2(y) / scale < FEASIBLE {
        return Ok(SolveResult {
            solution: Vector::zeros(n)?,
            status: SolveStatus::Converged,
            iterations: 0,
            constraint_residual: norm2(y) / scale,
        });
    }

    let mut visited = 0;
    for size in 1..=max_sparsity.min(a.rows()) {
        let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        let mut support: Vec<usize> = (0..size).collect();
        loop {
            visited += 1;
            let sub = a.select_columns(&support)?;
            if let Some((coef, res)) = least_squares(&sub, y) {
                let res = res / scale;
                // Lexicographic enumeration: a strict improvement is needed to
                // displace an earlier support.
                if res < FEASIBLE && best.as_ref().is_none_or(|b| res < b.0) {
                    best = Some((res, support.clone(), coef));
                }
            }
            if !next_combination(&mut support, n) {
                break;
            }
        }
        if let Some((_, support, coef)) = best {
            let mut theta = vec![0.0; n];
            for (idx, c) in support.iter().zip(coef) {
                theta[*idx] = c;
            }
            return Ok(SolveResult {
                constraint_residual: constraint_residual(a, &theta, y),
                solution: Vector::new(theta)?,
                status: SolveStatus::Converged,
                iterations: visited,
            });
        }
    }

    Ok(SolveResult {
        constraint_residual: norm2(y) / scale,
        solution: Vector::zeros(n)?,
        status: SolveStatus::Infeasible,
        iterations: visited,
    })
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
