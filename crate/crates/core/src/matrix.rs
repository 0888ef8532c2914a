//! Dense real linear algebra and orthonormal basis constructions.
//!
//! Everything here is row-major `f64`. Matrices and vectors are immutable
//! once built; every public constructor rejects NaN/Inf entries.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

/// A finite, nonempty real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("vector length"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Vector::new"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    /// Number of entries that are exactly nonzero.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    /// `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &Vector, beta: f64) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                op: "axpby",
                left: self.len().to_string(),
                right: other.len().to_string(),
            });
        }
        Vector::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inner product with eight independent accumulators so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let lo = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let hi = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    lo + hi + tail
}

/// Dense row-major real matrix with at least one row and one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

fn checked_len(rows: usize, cols: usize) -> Result<usize> {
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("matrix dimension"));
    }
    rows.checked_mul(cols)
        .ok_or(Error::Overflow { rows, cols })
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                op: "DenseMatrix::new",
                left: shape(rows, cols),
                right: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DenseMatrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; len],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != ncols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(nrows, ncols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let len = checked_len(rows, cols)?;
        let mut data = Vec::with_capacity(len);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Column vector `n x 1`.
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(self.mismatch("max_abs_diff", other));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn mismatch(&self, op: &'static str, other: &DenseMatrix) -> Error {
        Error::DimensionMismatch {
            op,
            left: shape(self.rows, self.cols),
            right: shape(other.rows, other.cols),
        }
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn column_block(&self, start: usize, len: usize) -> Result<DenseMatrix> {
        if start + len > self.cols {
            return Err(Error::IndexOutOfRange {
                index: start + len,
                size: self.cols,
            });
        }
        let mut data = Vec::with_capacity(self.rows * len);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + len]);
        }
        DenseMatrix::new(self.rows, len, data)
    }

    /// Selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: self.cols,
            });
        }
        DenseMatrix::from_fn(self.rows, cols.len(), |i, j| self.get(i, cols[j]))
    }

    pub fn scale(&self, alpha: f64) -> Result<DenseMatrix> {
        DenseMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                left: shape(self.rows, self.cols),
                right: format!("vector of length {}", v.len()),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        Ok(out)
    }

    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "transpose_matvec",
                left: shape(self.cols, self.rows),
                right: format!("vector of length {}", v.len()),
            });
        }
        let mut out = vec![0.0; self.cols];
        self.transpose_matvec_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, v);
        }
    }

    pub(crate) fn transpose_matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        out.fill(0.0);
        for (&w, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if w == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += w * a;
            }
        }
    }

    /// `A * A^T`, exploiting symmetry.
    pub fn gram_rows(&self) -> DenseMatrix {
        let n = self.rows;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DenseMatrix {
            rows: n,
            cols: n,
            data,
        }
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(a.mismatch("matmul", b));
    }
    let mut data = vec![0.0; a.rows * b.cols];
    for (out_row, a_row) in data
        .chunks_exact_mut(b.cols)
        .zip(a.data.chunks_exact(a.cols))
    {
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matmul"));
    }
    Ok(DenseMatrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

pub fn transpose(a: &DenseMatrix) -> DenseMatrix {
    let mut data = vec![0.0; a.data.len()];
    for i in 0..a.rows {
        for j in 0..a.cols {
            data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    DenseMatrix {
        rows: a.cols,
        cols: a.rows,
        data,
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i][j] * b`.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = a.rows.checked_mul(b.rows).ok_or(Error::Overflow {
        rows: a.rows,
        cols: b.rows,
    })?;
    let cols = a.cols.checked_mul(b.cols).ok_or(Error::Overflow {
        rows: a.cols,
        cols: b.cols,
    })?;
    let len = checked_len(rows, cols)?;
    let mut data = vec![0.0; len];
    for ai in 0..a.rows {
        for bi in 0..b.rows {
            let out_row = &mut data[(ai * b.rows + bi) * cols..][..cols];
            for aj in 0..a.cols {
                let s = a.get(ai, aj);
                let dst = &mut out_row[aj * b.cols..(aj + 1) * b.cols];
                for (d, v) in dst.iter_mut().zip(b.row(bi)) {
                    *d = s * v;
                }
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kronecker"));
    }
    Ok(DenseMatrix { rows, cols, data })
}

/// Orthonormal DCT-II basis of size `n`; column `k` is the `k`-th cosine
/// atom, so `x = Q * theta` synthesizes and `theta = Q^T * x` analyzes.
pub fn dct_basis(n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::Empty("dct size"));
    }
    let nf = n as f64;
    DenseMatrix::from_fn(n, n, |i, k| {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        scale * (PI * (i as f64 + 0.5) * k as f64 / nf).cos()
    })
}

/// Largest absolute entry of `Q^T Q - I`.
pub fn orthonormality_defect(q: &DenseMatrix) -> Result<f64> {
    if !q.is_square() {
        return Err(Error::NotSquare {
            rows: q.rows,
            cols: q.cols,
        });
    }
    let n = q.cols;
    let qt = transpose(q);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(qt.row(i), qt.row(j)) - target).abs());
        }
    }
    Ok(worst)
}

/// True iff every entry of `Q^T Q - I` is within `tol` of zero.
pub fn check_orthonormal(q: &DenseMatrix, tol: f64) -> Result<bool> {
    Ok(orthonormality_defect(q)? <= tol)
}

/// An orthonormal sparsifying basis: `x = Psi * theta`, `theta = Psi^T * x`.
pub trait Basis: Sync {
    fn dim(&self) -> usize;

    /// `Psi * theta`.
    fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>>;

    /// `Psi^T * x`.
    fn analyze(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Worst deviation of `Psi^T Psi` from the identity.
    fn orthonormality_defect(&self) -> Result<f64>;

    /// Short description recorded in measurement-matrix provenance.
    fn describe(&self) -> String;
}

impl Basis for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.matvec(coeffs)
    }

    fn analyze(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.transpose_matvec(x)
    }

    fn orthonormality_defect(&self) -> Result<f64> {
        orthonormality_defect(self)
    }

    fn describe(&self) -> String {
        format!("dense {}x{}", self.rows, self.cols)
    }
}

/// `Psi = F_1 ⊗ F_2 ⊗ ... ⊗ F_d` kept in factored form. Applying it costs
/// `N * sum(n_i)` instead of `N^2`, which matters for image-sized signals.
#[derive(Clone, Debug)]
pub struct KroneckerBasis {
    factors: Vec<DenseMatrix>,
    dim: usize,
}

impl KroneckerBasis {
    pub fn new(factors: Vec<DenseMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Empty("kronecker factors"));
        }
        let mut dim: usize = 1;
        for f in &factors {
            if !f.is_square() {
                return Err(Error::NotSquare {
                    rows: f.rows,
                    cols: f.cols,
                });
            }
            dim = dim.checked_mul(f.rows).ok_or(Error::Overflow {
                rows: dim,
                cols: f.rows,
            })?;
        }
        Ok(Self { factors, dim })
    }

    /// Separable 2D DCT basis for a row-major `height x width` image.
    pub fn dct_2d(height: usize, width: usize) -> Result<Self> {
        Self::new(vec![dct_basis(height)?, dct_basis(width)?])
    }

    pub fn factors(&self) -> &[DenseMatrix] {
        &self.factors
    }

    /// Dense `N x N` realization via repeated [`kronecker`].
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let mut acc = self.factors[0].clone();
        for f in &self.factors[1..] {
            acc = kronecker(&acc, f)?;
        }
        Ok(acc)
    }

    fn apply(&self, v: &[f64], transposed: bool) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                op: "KroneckerBasis::apply",
                left: self.dim.to_string(),
                right: v.len().to_string(),
            });
        }
        let mut cur = v.to_vec();
        let mut next = vec![0.0; self.dim];
        // Row-major index = ((i_1 * n_2 + i_2) * n_3 + ...), so mode k has
        // stride equal to the product of the trailing factor sizes.
        let mut inner = self.dim;
        for f in &self.factors {
            let n = f.rows;
            inner /= n;
            let outer = self.dim / (inner * n);
            next.fill(0.0);
            for o in 0..outer {
                let base = o * n * inner;
                for r in 0..n {
                    let dst = &mut next[base + r * inner..base + (r + 1) * inner];
                    for c in 0..n {
                        let w = if transposed { f.get(c, r) } else { f.get(r, c) };
                        if w == 0.0 {
                            continue;
                        }
                        let src = &cur[base + c * inner..base + (c + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += w * s;
                        }
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }
}

impl Basis for KroneckerBasis {
    fn dim(&self) -> usize {
        self.dim
    }

    fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.apply(coeffs, false)
    }

    fn analyze(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x, true)
    }

    fn orthonormality_defect(&self) -> Result<f64> {
        // (Q1 ⊗ Q2)^T (Q1 ⊗ Q2) = Q1^T Q1 ⊗ Q2^T Q2; first-order bound.
        let mut total = 0.0;
        for f in &self.factors {
            total += orthonormality_defect(f)?;
        }
        Ok(total)
    }

    fn describe(&self) -> String {
        let sizes: Vec<String> = self.factors.iter().map(|f| f.rows.to_string()).collect();
        format!("kronecker {}", sizes.join("x"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; b.cols()]; a.rows()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                for k in 0..a.cols() {
                    out[i][j] += a.get(i, k) * b.get(k, j);
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let b = random_matrix(3, 4, 1);
        let i3 = DenseMatrix::identity(3).unwrap();
        assert_eq!(matmul(&i3, &b).unwrap(), b);

        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let ones = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let p = matmul(&a, &ones).unwrap();
        assert_eq!(p, DenseMatrix::from_rows(&[[3.0], [7.0]]).unwrap());
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random_matrix(5, 4, 2);
        let b = random_matrix(4, 3, 3);
        let p = matmul(&a, &b).unwrap();
        let oracle = naive_matmul(&a, &b);
        for i in 0..5 {
            for j in 0..3 {
                assert!((p.get(i, j) - oracle[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = random_matrix(2, 3, 4);
        let err = matmul(&a, &a).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "{msg}");
    }

    #[test]
    fn transpose_cases() {
        let i4 = DenseMatrix::identity(4).unwrap();
        assert_eq!(transpose(&i4), i4);
        let a = random_matrix(3, 5, 5);
        assert_eq!(transpose(&transpose(&a)), a);
        let r = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(
            transpose(&r),
            DenseMatrix::column_vector(&[1.0, 2.0, 3.0]).unwrap()
        );
    }

    #[test]
    fn kronecker_cases() {
        let i2 = DenseMatrix::identity(2).unwrap();
        let i3 = DenseMatrix::identity(3).unwrap();
        assert_eq!(kronecker(&i2, &i3).unwrap(), DenseMatrix::identity(6).unwrap());

        let swap = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let k = kronecker(&swap, &i2).unwrap();
        let expected = DenseMatrix::from_rows(&[
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(k, expected);

        let q = kronecker(&dct_basis(4).unwrap(), &dct_basis(8).unwrap()).unwrap();
        assert!(check_orthonormal(&q, 1e-10).unwrap());
    }

    #[test]
    fn kronecker_block_structure() {
        let a = random_matrix(2, 3, 6);
        let b = random_matrix(3, 2, 7);
        let k = kronecker(&a, &b).unwrap();
        assert_eq!(k.dims(), (6, 6));
        for i in 0..2 {
            for j in 0..3 {
                for p in 0..3 {
                    for q in 0..2 {
                        assert_eq!(k.get(i * 3 + p, j * 2 + q), a.get(i, j) * b.get(p, q));
                    }
                }
            }
        }
    }

    #[test]
    fn dct_cases() {
        assert_eq!(dct_basis(1).unwrap(), DenseMatrix::identity(1).unwrap());
        assert!(check_orthonormal(&dct_basis(8).unwrap(), 1e-10).unwrap());
        let q4 = dct_basis(4).unwrap();
        for v in q4.column(0) {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!(matches!(dct_basis(0), Err(Error::Empty(_))));
    }

    #[test]
    fn orthonormal_checks() {
        assert!(check_orthonormal(&DenseMatrix::identity(10).unwrap(), 1e-12).unwrap());
        let two = DenseMatrix::identity(3).unwrap().scale(2.0).unwrap();
        assert!(!check_orthonormal(&two, 1e-6).unwrap());
        assert!(check_orthonormal(&dct_basis(16).unwrap(), 1e-10).unwrap());
        assert!(matches!(
            check_orthonormal(&random_matrix(2, 3, 1), 1e-3),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<Vector>("[]").is_err());
        assert!(
            serde_json::from_str::<DenseMatrix>(r#"{"rows":1,"cols":2,"data":[1.0]}"#).is_err()
        );
    }

    #[test]
    fn kronecker_basis_matches_dense() {
        let kb = KroneckerBasis::new(vec![dct_basis(4).unwrap(), dct_basis(3).unwrap(), dct_basis(2).unwrap()])
            .unwrap();
        let dense = kb.to_dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = kb.synthesize(&v).unwrap();
        let slow = dense.matvec(&v).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        let fast_t = kb.analyze(&v).unwrap();
        let slow_t = dense.transpose_matvec(&v).unwrap();
        for (a, b) in fast_t.iter().zip(&slow_t) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(kb.orthonormality_defect().unwrap() < 1e-12);
    }
}
