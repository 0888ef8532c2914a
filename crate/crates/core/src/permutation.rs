//! Coordinate permutations and their 0/1 matrix realizations.
//!
//! A [`Permutation`] stores `map[i] = pi(i)`. Its matrix `P` has a single 1
//! per row, at `P[i][pi(i)]`, so `P v` gathers: `(P v)[i] = v[pi(i)]`, and
//! the inverse permutation realizes `P^T`.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, Vector};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    /// Validates that `map` is a bijection on `0..map.len()`.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Empty("permutation size"));
        }
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {m} out of range for size {n}"
                )));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidPermutation(format!("index {m} repeated")));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("permutation size"));
        }
        Ok(Self {
            map: (0..n).collect(),
        })
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::identity(n)?;
        p.map.shuffle(rng);
        Ok(p)
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// `P` with `P[i][pi(i)] = 1`.
    pub fn to_matrix(&self) -> DenseMatrix {
        let n = self.size();
        let mut data = vec![0.0; n * n];
        for (i, &m) in self.map.iter().enumerate() {
            data[i * n + m] = 1.0;
        }
        DenseMatrix::new(n, n, data).expect("permutation matrix is finite and nonempty")
    }

    /// `P v` without materializing `P`.
    pub fn apply(&self, v: &[f64]) -> Result<Vector> {
        Vector::new(self.apply_slice(v)?)
    }

    pub(crate) fn apply_slice(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::DimensionMismatch {
                op: "Permutation::apply",
                left: self.size().to_string(),
                right: v.len().to_string(),
            });
        }
        Ok(self.map.iter().map(|&m| v[m]).collect())
    }

    pub fn invert(&self) -> Permutation {
        let mut inv = vec![0; self.size()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { map: inv }
    }

    /// The permutation whose matrix is `P_self * P_other`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch {
                op: "Permutation::compose",
                left: self.size().to_string(),
                right: other.size().to_string(),
            });
        }
        Ok(Permutation {
            map: self.map.iter().map(|&m| other.map[m]).collect(),
        })
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Permutation::from_map(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

/// Nonzero count in each of `segments` equal-length segments of `v`.
pub fn segment_counts(v: &[f64], segments: usize) -> Vec<usize> {
    let len = v.len() / segments.max(1);
    v.chunks(len.max(1))
        .map(|c| c.iter().filter(|x| **x != 0.0).count())
        .collect()
}

/// Support-aware permutation that spreads `support` evenly over `segments`
/// equal segments of length `n / segments`.
///
/// After `apply`, every segment holds `|support| / segments` support entries.
/// When that division is not exact, a random subset of segments receives one
/// extra entry, so counts differ by at most one. Positions inside each segment
/// are shuffled.
pub fn balanced_oracle<R: Rng + ?Sized>(
    support: &[usize],
    n: usize,
    segments: usize,
    rng: &mut R,
) -> Result<Permutation> {
    if n == 0 || segments == 0 {
        return Err(Error::Empty("balanced_oracle size"));
    }
    if n % segments != 0 {
        return Err(Error::InvalidArgument(format!(
            "length {n} is not divisible into {segments} segments"
        )));
    }
    let mut in_support = vec![false; n];
    for &s in support {
        if s >= n {
            return Err(Error::IndexOutOfRange { index: s, size: n });
        }
        in_support[s] = true;
    }
    let mut hits: Vec<usize> = (0..n).filter(|&i| in_support[i]).collect();
    let mut misses: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();
    hits.shuffle(rng);
    misses.shuffle(rng);

    let len = n / segments;
    let base = hits.len() / segments;
    let mut extra = vec![false; segments];
    for s in sample(rng, segments, hits.len() % segments) {
        extra[s] = true;
    }

    let mut map = Vec::with_capacity(n);
    let (mut hit_iter, mut miss_iter) = (hits.into_iter(), misses.into_iter());
    for seg_extra in extra {
        let count = base + usize::from(seg_extra);
        let start = map.len();
        map.extend(hit_iter.by_ref().take(count));
        map.extend(miss_iter.by_ref().take(len - count));
        map[start..].shuffle(rng);
    }
    Permutation::from_map(map)
}

/// Empirical distribution of per-segment sparsity under random permutation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancingStats {
    pub trials: usize,
    pub mean_per_segment: f64,
    pub std_per_segment: f64,
}

/// Draws `trials` random `s`-sparse supports on `n = l * segments`
/// coordinates, permutes each uniformly at random and pools the per-segment
/// nonzero counts. The reported spread is the population standard deviation
/// over all `trials * segments` counts.
pub fn balancing_stats<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    segments: usize,
    s: usize,
    trials: usize,
    rng: &mut R,
) -> Result<BalancingStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if l == 0 || segments == 0 || l.checked_mul(segments) != Some(n) {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must equal l * M = {l} * {segments}"
        )));
    }
    if s > n {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} exceeds length {n}"
        )));
    }
    let mut signal = vec![0.0; n];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        signal.fill(0.0);
        for i in sample(rng, n, s) {
            signal[i] = 1.0;
        }
        let p = Permutation::random(n, rng)?;
        let permuted = p.apply_slice(&signal)?;
        for c in segment_counts(&permuted, segments) {
            let c = c as f64;
            sum += c;
            sum_sq += c * c;
        }
    }
    let count = (trials * segments) as f64;
    let mean = sum / count;
    let var = (sum_sq / count - mean * mean).max(0.0);
    Ok(BalancingStats {
        trials,
        mean_per_segment: mean,
        std_per_segment: var.sqrt(),
    })
}
