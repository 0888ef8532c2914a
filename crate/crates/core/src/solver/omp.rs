use crate::error::Result;
use crate::matrix::{dot, norm2, DenseMatrix, Vector};

use super::linalg::least_squares;
use super::{check_measurements, constraint_residual, SolveResult, SolveStatus};

/// Residual (relative to `max(1, ||y||)`) below which OMP stops early.
const OMP_TOLERANCE: f64 = 1e-9;

/// Orthogonal matching pursuit with at most `max_sparsity` selected atoms.
pub fn omp(a: &DenseMatrix, y: &[f64], max_sparsity: usize) -> Result<SolveResult> {
    check_measurements("omp", a, y)?;
    let n = a.cols();
    let scale = norm2(y).max(1.0);
    let col_norms: Vec<f64> = (0..n).map(|j| norm2(&a.column(j))).collect();

    let mut theta = vec![0.0; n];
    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterationsReached;

    let budget = max_sparsity.min(a.rows()).min(n);
    loop {
        if norm2(&residual) / scale < OMP_TOLERANCE {
            status = SolveStatus::Converged;
            break;
        }
        if support.len() >= budget {
            break;
        }
        let corr = a.transpose_matvec(&residual)?;
        let best = (0..n)
            .filter(|j| !support.contains(j) && col_norms[*j] > 0.0)
            .map(|j| (j, corr[j].abs() / col_norms[j]))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        let Some((j, _)) = best else { break };
        support.push(j);
        iterations += 1;

        let sub = a.select_columns(&support)?;
        let Some((coef, _)) = least_squares(&sub, y) else {
            support.pop();
            break;
        };
        theta.fill(0.0);
        for (&idx, c) in support.iter().zip(&coef) {
            theta[idx] = *c;
        }
        let fit = sub.matvec(&coef)?;
        for ((r, yi), f) in residual.iter_mut().zip(y).zip(&fit) {
            *r = yi - f;
        }
        debug_assert!(dot(&residual, &fit).abs() < 1e-6 * scale * scale);
    }

    Ok(SolveResult {
        constraint_residual: constraint_residual(a, &theta, y),
        solution: Vector::new(theta)?,
        status,
        iterations,
    })
}
