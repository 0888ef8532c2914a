//! Block-diagonal sensing matrices and the merged linear encoder.
//!
//! The decoder sees `y = A_bar * theta` with `A_bar = diag(A[1], ..., A[M])`.
//! The encoder never forms `theta`; it applies one stored matrix
//! `Phi = A_bar * P * Psi^T` to the raw signal, so permuting the coefficients
//! costs nothing at acquisition time.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::matrix::{Basis, DenseMatrix, Vector};
use crate::permutation::Permutation;

/// Tolerance on `Psi^T Psi = I` accepted by [`build_measurement_matrix`].
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

/// One diagonal block `A[i]` (`K_i x l_i`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensingBlock {
    matrix: DenseMatrix,
}

impl SensingBlock {
    pub fn new(matrix: DenseMatrix) -> Self {
        Self { matrix }
    }

    /// `k0 x l` block of i.i.d. `N(0, 1/k0)` entries.
    pub fn gaussian<R: Rng + ?Sized>(k0: usize, l: usize, rng: &mut R) -> Result<Self> {
        if k0 == 0 || l == 0 {
            return Err(Error::Empty("sensing block dimension"));
        }
        let normal = Normal::new(0.0, (1.0 / k0 as f64).sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let matrix = DenseMatrix::from_fn(k0, l, |_, _| normal.sample(rng))?;
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Measurement count `K_i`.
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Segment length `l_i`.
    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// `K_i <= l_i`. Oversampled blocks are legal but defeat compression.
    pub fn is_compressive(&self) -> bool {
        self.rows() <= self.cols()
    }
}

/// Convenience wrapper over [`SensingBlock::gaussian`].
pub fn gaussian_block<R: Rng + ?Sized>(k0: usize, l: usize, rng: &mut R) -> Result<SensingBlock> {
    SensingBlock::gaussian(k0, l, rng)
}

/// `A_bar = diag(A[1], ..., A[M])` kept in block form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SensingRecord", into = "SensingRecord")]
pub struct BlockDiagonalSensing {
    blocks: Vec<SensingBlock>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    seed: Option<u64>,
}

/// Portable form: the blocks plus the seed that generated them, if any.
#[derive(Serialize, Deserialize)]
struct SensingRecord {
    #[serde(default)]
    seed: Option<u64>,
    blocks: Vec<SensingBlock>,
}

impl TryFrom<SensingRecord> for BlockDiagonalSensing {
    type Error = Error;

    fn try_from(r: SensingRecord) -> Result<Self> {
        Ok(block_diagonal(r.blocks)?.with_seed(r.seed))
    }
}

impl From<BlockDiagonalSensing> for SensingRecord {
    fn from(s: BlockDiagonalSensing) -> Self {
        SensingRecord {
            seed: s.seed,
            blocks: s.blocks,
        }
    }
}

pub fn block_diagonal(blocks: Vec<SensingBlock>) -> Result<BlockDiagonalSensing> {
    if blocks.is_empty() {
        return Err(Error::Empty("sensing block list"));
    }
    let mut row_offsets = Vec::with_capacity(blocks.len() + 1);
    let mut col_offsets = Vec::with_capacity(blocks.len() + 1);
    let (mut r, mut c) = (0usize, 0usize);
    for (i, b) in blocks.iter().enumerate() {
        if !b.is_compressive() {
            log::warn!(
                "sensing block {i} is {}x{}: more measurements than coefficients",
                b.rows(),
                b.cols()
            );
        }
        row_offsets.push(r);
        col_offsets.push(c);
        r += b.rows();
        c += b.cols();
    }
    row_offsets.push(r);
    col_offsets.push(c);
    Ok(BlockDiagonalSensing {
        blocks,
        row_offsets,
        col_offsets,
        seed: None,
    })
}

impl BlockDiagonalSensing {
    /// `segments` copies of one shared block, the equal-configuration layout
    /// where every decoding processor runs the same `A_0`.
    pub fn repeated(block: SensingBlock, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::Empty("segment count"));
        }
        block_diagonal(vec![block; segments])
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn blocks(&self) -> &[SensingBlock] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total measurement count `K`.
    pub fn total_rows(&self) -> usize {
        *self.row_offsets.last().expect("offsets are nonempty")
    }

    /// Coefficient length `N`.
    pub fn total_cols(&self) -> usize {
        *self.col_offsets.last().expect("offsets are nonempty")
    }

    /// Row offset of each block, followed by `K`.
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    /// Column offset of each block, followed by `N`.
    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    /// Dense `K x N` matrix with zeros off the diagonal blocks.
    pub fn materialize(&self) -> Result<DenseMatrix> {
        let (k, n) = (self.total_rows(), self.total_cols());
        let mut data = vec![0.0; k.checked_mul(n).ok_or(Error::Overflow { rows: k, cols: n })?];
        for (b, block) in self.blocks.iter().enumerate() {
            let (r0, c0) = (self.row_offsets[b], self.col_offsets[b]);
            for i in 0..block.rows() {
                let dst = &mut data[(r0 + i) * n + c0..][..block.cols()];
                dst.copy_from_slice(block.matrix.row(i));
            }
        }
        DenseMatrix::new(k, n, data)
    }

    /// `y[i] = A[i] theta[i]` for every block, concatenated.
    pub fn apply_blockwise(&self, theta: &[f64]) -> Result<Vector> {
        if theta.len() != self.total_cols() {
            return Err(Error::DimensionMismatch {
                op: "apply_blockwise",
                left: shape(self.total_rows(), self.total_cols()),
                right: format!("vector of length {}", theta.len()),
            });
        }
        let mut y = vec![0.0; self.total_rows()];
        for (b, block) in self.blocks.iter().enumerate() {
            let seg = &theta[self.col_offsets[b]..self.col_offsets[b + 1]];
            let out = &mut y[self.row_offsets[b]..self.row_offsets[b + 1]];
            block.matrix.matvec_into(seg, out);
        }
        Vector::new(y)
    }

    /// Short content fingerprint used in provenance records.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv::new();
        for b in &self.blocks {
            h.write_usize(b.rows());
            h.write_usize(b.cols());
            for v in b.matrix.as_slice() {
                h.write_u64(v.to_bits());
            }
        }
        format!("{:016x}", h.0)
    }
}

/// FNV-1a, enough to tell configurations apart in provenance records.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for byte in v.to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

pub(crate) fn permutation_fingerprint(p: &Permutation) -> String {
    let mut h = Fnv::new();
    for &m in p.map() {
        h.write_usize(m);
    }
    format!("{:016x}", h.0)
}

/// Where a measurement matrix came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sensing: String,
    pub sensing_seed: Option<u64>,
    pub permutation: Option<String>,
    pub basis: String,
}

/// Encoder matrix `Phi = A_bar * P * Psi^T` (`K x N`) with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMatrix {
    pub matrix: DenseMatrix,
    pub provenance: Provenance,
}

impl MeasurementMatrix {
    /// Wraps an arbitrary matrix; provenance marks it as external.
    pub fn from_matrix(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            provenance: Provenance {
                sensing: "external".into(),
                sensing_seed: None,
                permutation: None,
                basis: "identity".into(),
            },
        }
    }
}

/// `Phi = A_bar * P * Psi^T`, or `A_bar * Psi^T` without a permutation.
pub fn build_measurement_matrix(
    s: &BlockDiagonalSensing,
    p: Option<&Permutation>,
    psi: &DenseMatrix,
) -> Result<MeasurementMatrix> {
    build_measurement_matrix_with(s, p, psi)
}

/// [`build_measurement_matrix`] for any orthonormal basis representation.
pub fn build_measurement_matrix_with(
    s: &BlockDiagonalSensing,
    p: Option<&Permutation>,
    psi: &dyn Basis,
) -> Result<MeasurementMatrix> {
    let n = s.total_cols();
    if psi.dim() != n {
        return Err(Error::DimensionMismatch {
            op: "build_measurement_matrix",
            left: shape(s.total_rows(), n),
            right: format!("basis of dimension {}", psi.dim()),
        });
    }
    if let Some(p) = p {
        if p.size() != n {
            return Err(Error::DimensionMismatch {
                op: "build_measurement_matrix",
                left: shape(s.total_rows(), n),
                right: format!("permutation of size {}", p.size()),
            });
        }
    }
    let deviation = psi.orthonormality_defect()?;
    if !(deviation <= ORTHONORMALITY_TOLERANCE) {
        return Err(Error::NotOrthonormal {
            tol: ORTHONORMALITY_TOLERANCE,
            deviation,
        });
    }

    // Row r of A_bar * P has A_bar[r][i] at column pi(i); row r of Phi is
    // then Psi applied to that row.
    let k = s.total_rows();
    let mut data = Vec::with_capacity(k * n);
    let mut scattered = vec![0.0; n];
    for (b, block) in s.blocks.iter().enumerate() {
        let c0 = s.col_offsets[b];
        for i in 0..block.rows() {
            scattered.fill(0.0);
            for (j, &v) in block.matrix.row(i).iter().enumerate() {
                let col = c0 + j;
                let dst = p.map_or(col, |p| p.map()[col]);
                scattered[dst] = v;
            }
            data.extend(psi.synthesize(&scattered)?);
        }
    }
    Ok(MeasurementMatrix {
        matrix: DenseMatrix::new(k, n, data)?,
        provenance: Provenance {
            sensing: s.fingerprint(),
            sensing_seed: s.seed,
            permutation: p.map(permutation_fingerprint),
            basis: psi.describe(),
        },
    })
}

/// `y = Phi x`.
pub fn encode(phi: &MeasurementMatrix, x: &[f64]) -> Result<Vector> {
    Vector::new(phi.matrix.matvec(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{dct_basis, matmul, transpose, KroneckerBasis};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn random_sensing(m: usize, k0: usize, l: usize, r: &mut ChaCha8Rng) -> BlockDiagonalSensing {
        block_diagonal(
            (0..m)
                .map(|_| SensingBlock::gaussian(k0, l, r).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_block_variance() {
        let b = gaussian_block(100, 400, &mut rng(1)).unwrap();
        let vals = b.matrix().as_slice();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((0.0095..=0.0105).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_block_edge_cases() {
        let b = gaussian_block(1, 1, &mut rng(2)).unwrap();
        assert!(b.matrix().get(0, 0).is_finite());
        assert!(gaussian_block(0, 3, &mut rng(2)).is_err());
        assert_eq!(
            gaussian_block(5, 9, &mut rng(3)).unwrap(),
            gaussian_block(5, 9, &mut rng(3)).unwrap()
        );
        assert!(!gaussian_block(5, 3, &mut rng(3)).unwrap().is_compressive());
    }

    #[test]
    fn gaussian_columns_concentrate() {
        let b = gaussian_block(60, 2000, &mut rng(4)).unwrap();
        let ok = (0..2000)
            .filter(|&j| {
                let sq: f64 = b.matrix().column(j).iter().map(|v| v * v).sum();
                (0.5..=1.5).contains(&sq)
            })
            .count();
        assert!(ok as f64 >= 0.99 * 2000.0, "{ok}");
    }

    #[test]
    fn block_diagonal_layouts() {
        let b = gaussian_block(3, 5, &mut rng(5)).unwrap();
        let s = block_diagonal(vec![b.clone()]).unwrap();
        assert_eq!(&s.materialize().unwrap(), b.matrix());

        let one = |v: f64| SensingBlock::new(DenseMatrix::from_rows(&[[v]]).unwrap());
        let s = block_diagonal(vec![one(2.0), one(-3.0)]).unwrap();
        assert_eq!(
            s.materialize().unwrap(),
            DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, -3.0]]).unwrap()
        );
        assert!(block_diagonal(vec![]).is_err());
    }

    #[test]
    fn materialized_blocks_are_exactly_placed() {
        let mut r = rng(6);
        let blocks = vec![
            gaussian_block(2, 4, &mut r).unwrap(),
            gaussian_block(3, 3, &mut r).unwrap(),
            gaussian_block(1, 5, &mut r).unwrap(),
        ];
        let s = block_diagonal(blocks.clone()).unwrap();
        assert_eq!(s.row_offsets(), &[0, 2, 5, 6]);
        assert_eq!(s.col_offsets(), &[0, 4, 7, 12]);
        let dense = s.materialize().unwrap();
        assert_eq!(dense.nnz(), blocks.iter().map(|b| b.matrix().nnz()).sum::<usize>());
        for (b, block) in blocks.iter().enumerate() {
            for i in 0..block.rows() {
                for j in 0..12 {
                    let inside = (s.col_offsets()[b]..s.col_offsets()[b + 1]).contains(&j);
                    let v = dense.get(s.row_offsets()[b] + i, j);
                    if inside {
                        assert_eq!(v, block.matrix().get(i, j - s.col_offsets()[b]));
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn apply_blockwise_matches_dense() {
        let mut r = rng(7);
        let s = random_sensing(4, 4, 8, &mut r);
        let theta = random_vec(32, &mut r);
        let fast = s.apply_blockwise(&theta).unwrap();
        let slow = s.materialize().unwrap().matvec(&theta).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.apply_blockwise(&[0.0; 32]).unwrap().nnz(), 0);
        assert!(s.apply_blockwise(&[0.0; 31]).is_err());

        let single = random_sensing(1, 3, 6, &mut r);
        let v = random_vec(6, &mut r);
        assert_eq!(
            single.apply_blockwise(&v).unwrap().as_slice(),
            single.blocks()[0].matrix().matvec(&v).unwrap().as_slice()
        );
    }

    #[test]
    fn measurement_matrix_trivial_cases() {
        let mut r = rng(8);
        let s = random_sensing(2, 3, 4, &mut r);
        let eye = DenseMatrix::identity(8).unwrap();
        let id = Permutation::identity(8).unwrap();
        let with_id = build_measurement_matrix(&s, Some(&id), &eye).unwrap();
        assert_eq!(with_id.matrix, s.materialize().unwrap());
        let without = build_measurement_matrix(&s, None, &eye).unwrap();
        assert_eq!(without.matrix, with_id.matrix);
        assert!(without.provenance.permutation.is_none());
        assert!(with_id.provenance.permutation.is_some());
    }

    #[test]
    fn measurement_matrix_matches_literal_product() {
        let mut r = rng(9);
        let s = random_sensing(4, 3, 4, &mut r);
        let p = Permutation::random(16, &mut r).unwrap();
        let psi = dct_basis(16).unwrap();
        let phi = build_measurement_matrix(&s, Some(&p), &psi).unwrap();
        let literal = matmul(
            &matmul(&s.materialize().unwrap(), &p.to_matrix()).unwrap(),
            &transpose(&psi),
        )
        .unwrap();
        assert!(phi.matrix.max_abs_diff(&literal).unwrap() < 1e-12);
    }

    #[test]
    fn encoder_equals_staged_pipeline() {
        let mut r = rng(10);
        let s = random_sensing(4, 4, 16, &mut r);
        let p = Permutation::random(64, &mut r).unwrap();
        let psi = KroneckerBasis::dct_2d(8, 8).unwrap();
        let phi = build_measurement_matrix_with(&s, Some(&p), &psi).unwrap();
        for _ in 0..100 {
            let x = random_vec(64, &mut r);
            let one_shot = encode(&phi, &x).unwrap();
            let theta = psi.analyze(&x).unwrap();
            let staged = s.apply_blockwise(&p.apply(&theta).unwrap()).unwrap();
            let scale = staged.norm2().max(1e-300);
            let diff: f64 = one_shot
                .iter()
                .zip(staged.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff / scale < 1e-10);
        }
    }

    #[test]
    fn measurement_matrix_errors() {
        let mut r = rng(11);
        let s = random_sensing(2, 2, 4, &mut r);
        let bad = DenseMatrix::identity(8).unwrap().scale(1.5).unwrap();
        match build_measurement_matrix(&s, None, &bad) {
            Err(Error::NotOrthonormal { tol, .. }) => assert_eq!(tol, 1e-8),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_dim = DenseMatrix::identity(6).unwrap();
        assert!(build_measurement_matrix(&s, None, &wrong_dim).is_err());
        let p = Permutation::identity(5).unwrap();
        assert!(build_measurement_matrix(&s, Some(&p), &DenseMatrix::identity(8).unwrap()).is_err());
    }

    #[test]
    fn encode_identity_and_errors() {
        let phi = MeasurementMatrix::from_matrix(DenseMatrix::identity(4).unwrap());
        let x = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(encode(&phi, &x).unwrap().as_slice(), &x);
        assert!(encode(&phi, &x[..3]).is_err());
    }

    #[test]
    fn sensing_json_round_trip_keeps_seed() {
        let mut r = rng(12);
        let s = random_sensing(3, 2, 5, &mut r).with_seed(Some(77));
        let json = serde_json::to_string(&s).unwrap();
        let back: BlockDiagonalSensing = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.seed(), Some(77));

        let phi = build_measurement_matrix(&s, None, &DenseMatrix::identity(15).unwrap()).unwrap();
        let back: MeasurementMatrix =
            serde_json::from_str(&serde_json::to_string(&phi).unwrap()).unwrap();
        assert_eq!(back, phi);
        assert_eq!(back.provenance.sensing_seed, Some(77));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn encode_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut r = rng(seed);
            let s = random_sensing(3, 4, 6, &mut r);
            let p = Permutation::random(18, &mut r).unwrap();
            let phi = build_measurement_matrix(&s, Some(&p), &dct_basis(18).unwrap()).unwrap();
            let x = random_vec(18, &mut r);
            let z = random_vec(18, &mut r);
            let combo: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = encode(&phi, &combo).unwrap();
            let ex = encode(&phi, &x).unwrap();
            let ez = encode(&phi, &z).unwrap();
            let rhs = ex.axpby(alpha, &ez, beta).unwrap();
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
