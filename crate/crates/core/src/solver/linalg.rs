//! Small factorization kernels shared by the solvers.

use crate::matrix::{dot, DenseMatrix};

/// Cholesky factor of a symmetric positive semidefinite matrix. Rows whose
/// pivot falls below the rank tolerance are dropped, so the factor covers
/// the leading linearly independent subset of rows.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    n: usize,
    /// Lower triangle, row-major `n x n`; dropped rows are all zero.
    lower: Vec<f64>,
    kept: Vec<bool>,
}

impl Cholesky {
    pub(crate) fn factor(g: &DenseMatrix, rel_rank_tol: f64) -> Self {
        let n = g.rows();
        let scale = (0..n).map(|i| g.get(i, i)).fold(0.0, f64::max);
        let tol = rel_rank_tol * scale.max(f64::MIN_POSITIVE);
        let mut lower = vec![0.0; n * n];
        let mut kept = vec![false; n];
        for i in 0..n {
            for j in 0..i {
                if !kept[j] {
                    continue;
                }
                let s = g.get(i, j) - dot(&lower[i * n..i * n + j], &lower[j * n..j * n + j]);
                lower[i * n + j] = s / lower[j * n + j];
            }
            let d = g.get(i, i) - dot(&lower[i * n..i * n + i], &lower[i * n..i * n + i]);
            if d > tol {
                lower[i * n + i] = d.sqrt();
                kept[i] = true;
            } else {
                lower[i * n..i * n + i].fill(0.0);
            }
        }
        Self { n, lower, kept }
    }

    pub(crate) fn is_full_rank(&self) -> bool {
        self.kept.iter().all(|k| *k)
    }

    #[cfg(test)]
    pub(crate) fn kept(&self) -> &[bool] {
        &self.kept
    }

    /// Solves `G w = b` restricted to kept rows; dropped entries of `w` are 0.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            if !self.kept[i] {
                b[i] = 0.0;
                continue;
            }
            let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            if !self.kept[i] {
                continue;
            }
            let mut s = b[i];
            for j in i + 1..n {
                s -= l[j * n + i] * b[j];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// Least squares `min ||A x - y||` by Householder QR. Returns `None` when
/// `A` has more columns than rows or is numerically rank deficient.
pub(crate) fn least_squares(a: &DenseMatrix, y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let (m, n) = a.dims();
    if n > m {
        return None;
    }
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut rhs = y.to_vec();
    let scale = cols
        .iter()
        .map(|c| dot(c, c).sqrt())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let norm = dot(&cols[k][k..], &cols[k][k..]).sqrt();
        if norm <= 1e-12 * scale {
            return None;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(k + 1) {
            let f = 2.0 * dot(&v, &col[k..]) / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let f = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
        for (r, vi) in rhs[k..].iter_mut().zip(&v) {
            *r -= f * vi;
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in k + 1..n {
            s -= cols[j][k] * x[j];
        }
        x[k] = s / diag[k];
    }
    let residual = dot(&rhs[n..], &rhs[n..]).sqrt();
    Some((x, residual))
}
