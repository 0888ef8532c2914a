//! Basis pursuit, `min ||theta||_1  s.t.  A theta = y`, solved by ADMM on the
//! splitting `theta = z`: an affine projection onto `{A theta = y}` followed by
//! soft thresholding. The projection reuses one Cholesky factor of `A A^T`.
//!
//! ADMM settles the support of `z` long before the values converge, most
//! visibly on instances that are not exactly recoverable. When polishing is
//! enabled the solver periodically refits `theta` on the current support and
//! stops as soon as that point passes an exact KKT check for the LP: primal
//! feasibility, and a dual vector `nu` with `A_S^T nu = sign(theta_S)` and
//! `||A^T nu||_inf <= 1`.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, transpose, DenseMatrix, Vector};

use super::linalg::Cholesky;
use super::{constraint_residual, BasisPursuitConfig, SolveResult, SolveStatus};

/// Pivots below this fraction of the largest diagonal of `A A^T` are
/// treated as linearly dependent rows.
const RANK_TOLERANCE: f64 = 1e-10;

/// Iterations between polish attempts.
const POLISH_PERIOD: usize = 10;

/// Slack allowed on the dual constraint `||A^T nu||_inf <= 1`.
const DUAL_SLACK: f64 = 1e-9;

fn soft_threshold(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// Affine projector onto `{theta : A theta = y}`.
struct Projector<'a> {
    a: &'a DenseMatrix,
    chol: Cholesky,
    y: &'a [f64],
    /// `(A A^T)^{-1} (A v - y)` from the last projection.
    w: Vec<f64>,
    back: Vec<f64>,
}

impl Projector<'_> {
    /// `v - A^T (A A^T)^{-1} (A v - y)` written into `out`.
    fn project(&mut self, v: &[f64], out: &mut [f64]) {
        self.a.matvec_into(v, &mut self.w);
        for (w, y) in self.w.iter_mut().zip(self.y) {
            *w -= y;
        }
        self.chol.solve_in_place(&mut self.w);
        self.a.transpose_matvec_into(&self.w, &mut self.back);
        for ((o, v), b) in out.iter_mut().zip(v).zip(&self.back) {
            *o = v - b;
        }
    }
}

pub fn basis_pursuit(a: &DenseMatrix, y: &[f64], cfg: &BasisPursuitConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let (m, n) = a.dims();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            op: "basis_pursuit",
            left: format!("{m}x{n}"),
            right: format!("measurements of length {}", y.len()),
        });
    }

    // Work on y / ||y|| so the penalty does not depend on the signal scale.
    let scale = norm2(y);
    if scale == 0.0 {
        return Ok(SolveResult {
            solution: Vector::zeros(n)?,
            status: SolveStatus::Converged,
            iterations: 0,
            constraint_residual: 0.0,
        });
    }
    let y_unit: Vec<f64> = y.iter().map(|v| v / scale).collect();

    let chol = Cholesky::factor(&a.gram_rows(), RANK_TOLERANCE);
    let mut proj = Projector {
        a,
        chol,
        y: &y_unit,
        w: vec![0.0; m],
        back: vec![0.0; n],
    };

    let mut x = vec![0.0; n];
    // Minimum-norm point of the (reduced) affine set.
    proj.project(&vec![0.0; n], &mut x);

    if !proj.chol.is_full_rank() {
        let residual = constraint_residual(a, &x, &y_unit);
        if residual > cfg.abs_tolerance {
            x.iter_mut().for_each(|v| *v *= scale);
            return Ok(SolveResult {
                constraint_residual: constraint_residual(a, &x, y),
                solution: Vector::new(x)?,
                status: SolveStatus::Infeasible,
                iterations: 0,
            });
        }
    }

    let rho = cfg.penalty;
    let kappa = 1.0 / rho;
    let alpha = cfg.relaxation;
    let sqrt_n = (n as f64).sqrt();

    let mut z = x.clone();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut status = SolveStatus::MaxIterationsReached;
    let mut iterations = 0;
    let mut last_support: Vec<usize> = Vec::new();
    let mut polished: Option<Vec<f64>> = None;

    for it in 1..=cfg.max_iterations {
        iterations = it;
        for ((vi, zi), ui) in v.iter_mut().zip(&z).zip(&u) {
            *vi = zi - ui;
        }
        proj.project(&v, &mut x);

        let mut r2 = 0.0;
        let mut s2 = 0.0;
        let mut x2 = 0.0;
        let mut z2 = 0.0;
        let mut u2 = 0.0;
        for i in 0..n {
            let xh = alpha * x[i] + (1.0 - alpha) * z[i];
            let z_new = soft_threshold(xh + u[i], kappa);
            u[i] += xh - z_new;
            let dz = z_new - z[i];
            z[i] = z_new;
            let r = x[i] - z_new;
            r2 += r * r;
            s2 += dz * dz;
            x2 += x[i] * x[i];
            z2 += z_new * z_new;
            u2 += u[i] * u[i];
        }
        let primal = r2.sqrt();
        let dual = rho * s2.sqrt();
        let eps_primal = sqrt_n * cfg.abs_tolerance + cfg.rel_tolerance * x2.sqrt().max(z2.sqrt());
        let eps_dual = sqrt_n * cfg.abs_tolerance + cfg.rel_tolerance * rho * u2.sqrt();
        if primal <= eps_primal && dual <= eps_dual {
            status = SolveStatus::Converged;
            break;
        }

        if cfg.polish && it % POLISH_PERIOD == 0 {
            let support: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
            if support == last_support {
                // nu = -rho * w satisfies A^T nu = rho * u at an ADMM fixed point.
                let nu0: Vec<f64> = proj.w.iter().map(|w| -rho * w).collect();
                if let Some(theta) = polish(a, &y_unit, &support, &z, &nu0, cfg.abs_tolerance) {
                    polished = Some(theta);
                    status = SolveStatus::Converged;
                    break;
                }
            }
            last_support = support;
        }
    }

    let mut solution = polished.unwrap_or(x);
    solution.iter_mut().for_each(|v| *v *= scale);
    let residual = constraint_residual(a, &solution, y);
    if status == SolveStatus::Converged && residual > cfg.abs_tolerance {
        // Projection lost accuracy (ill-conditioned A A^T).
        status = SolveStatus::MaxIterationsReached;
    }
    Ok(SolveResult {
        solution: Vector::new(solution)?,
        status,
        iterations,
        constraint_residual: residual,
    })
}

/// Refits on `support` and returns the dense solution if it certifiably
/// solves the LP.
fn polish(
    a: &DenseMatrix,
    y: &[f64],
    support: &[usize],
    z: &[f64],
    nu0: &[f64],
    abs_tolerance: f64,
) -> Option<Vec<f64>> {
    let k = support.len();
    if k == 0 || k > a.rows() {
        return None;
    }
    let a_s = a.select_columns(support).ok()?;
    let a_s_t = transpose(&a_s);
    let chol = Cholesky::factor(&a_s_t.gram_rows(), 1e-12);
    if !chol.is_full_rank() {
        return None;
    }

    // Refit through the normal equations; the checks below reject any
    // precision loss.
    let mut coef = a_s.transpose_matvec(y).ok()?;
    chol.solve_in_place(&mut coef);
    let mut theta = vec![0.0; a.cols()];
    for (&j, &c) in support.iter().zip(&coef) {
        if c == 0.0 || c.signum() != z[j].signum() {
            return None;
        }
        theta[j] = c;
    }
    if constraint_residual(a, &theta, y) > abs_tolerance * 1e-3 {
        return None;
    }

    // Smallest correction of nu0 with A_S^T nu = sign(theta_S).
    let mut gap: Vec<f64> = support
        .iter()
        .zip(a_s_t.as_slice().chunks_exact(a.rows()))
        .map(|(&j, col)| z[j].signum() - dot(col, nu0))
        .collect();
    chol.solve_in_place(&mut gap);
    let shift = a_s.matvec(&gap).ok()?;
    let nu: Vec<f64> = nu0.iter().zip(&shift).map(|(a, b)| a + b).collect();

    let certificate = a.transpose_matvec(&nu).ok()?;
    if certificate.iter().any(|c| !(c.abs() <= 1.0 + DUAL_SLACK)) {
        return None;
    }
    for &j in support {
        if (certificate[j] - theta[j].signum()).abs() > 1e-8 {
            return None;
        }
    }
    Some(theta)
}
