//! Concurrent per-segment decoding.
//!
//! Each diagonal block `A[i]` sees only its own slice of the measurements, so
//! the `M` basis-pursuit problems are independent. They are handed out to a
//! small scoped thread pool; results are stored by segment index, which makes
//! the output independent of the worker count and of scheduling order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::matrix::{Basis, Vector};
use crate::permutation::Permutation;
use crate::sensing::{BlockDiagonalSensing, ORTHONORMALITY_TOLERANCE};
use crate::solver::{basis_pursuit, BasisPursuitConfig, SolveResult, SolveStatus};

/// How `theta` and `y` split into segments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    segment_lengths: Vec<usize>,
    measurement_counts: Vec<usize>,
    theta_offsets: Vec<usize>,
    y_offsets: Vec<usize>,
}

fn prefix_sums(v: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &x in v {
        acc += x;
        out.push(acc);
    }
    out
}

impl SegmentationPlan {
    pub fn new(segment_lengths: Vec<usize>, measurement_counts: Vec<usize>) -> Result<Self> {
        if segment_lengths.is_empty() {
            return Err(Error::Empty("segmentation plan"));
        }
        if segment_lengths.len() != measurement_counts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} segment lengths but {} measurement counts",
                segment_lengths.len(),
                measurement_counts.len()
            )));
        }
        if segment_lengths.contains(&0) || measurement_counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "segment lengths and measurement counts must be >= 1".into(),
            ));
        }
        Ok(Self {
            theta_offsets: prefix_sums(&segment_lengths),
            y_offsets: prefix_sums(&measurement_counts),
            segment_lengths,
            measurement_counts,
        })
    }

    /// `m` equal segments of an `n`-vector with `k / m` measurements each.
    pub fn uniform(n: usize, m: usize, k: usize) -> Result<Self> {
        if m == 0 || n % m != 0 || k % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot split N={n}, K={k} evenly into {m} segments"
            )));
        }
        Self::new(vec![n / m; m], vec![k / m; m])
    }

    pub fn from_sensing(s: &BlockDiagonalSensing) -> Self {
        let lengths = s.blocks().iter().map(|b| b.cols()).collect();
        let counts = s.blocks().iter().map(|b| b.rows()).collect();
        Self::new(lengths, counts).expect("sensing blocks are nonempty")
    }

    pub fn num_segments(&self) -> usize {
        self.segment_lengths.len()
    }

    pub fn segment_lengths(&self) -> &[usize] {
        &self.segment_lengths
    }

    pub fn measurement_counts(&self) -> &[usize] {
        &self.measurement_counts
    }

    pub fn theta_offsets(&self) -> &[usize] {
        &self.theta_offsets
    }

    pub fn y_offsets(&self) -> &[usize] {
        &self.y_offsets
    }

    pub fn total_length(&self) -> usize {
        *self.theta_offsets.last().expect("nonempty")
    }

    pub fn total_measurements(&self) -> usize {
        *self.y_offsets.last().expect("nonempty")
    }

    /// `sum l_i^3`, the dominant cost of solving every segment with a cubic
    /// method. For fixed `N` and `M` it is smallest when all `l_i` are equal.
    pub fn cubic_cost(&self) -> u128 {
        self.segment_lengths.iter().map(|&l| (l as u128).pow(3)).sum()
    }
}

/// Splits `y` along the plan's measurement counts.
pub fn segment(y: &[f64], plan: &SegmentationPlan) -> Result<Vec<Vector>> {
    if y.len() != plan.total_measurements() {
        return Err(Error::DimensionMismatch {
            op: "segment",
            left: format!("plan with K={}", plan.total_measurements()),
            right: format!("vector of length {}", y.len()),
        });
    }
    plan.y_offsets
        .windows(2)
        .map(|w| Vector::new(y[w[0]..w[1]].to_vec()))
        .collect()
}

/// `||estimate - truth||^2 / ||truth||^2`.
pub fn normalized_mse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            op: "normalized_mse",
            left: format!("truth of length {}", truth.len()),
            right: format!("estimate of length {}", estimate.len()),
        });
    }
    let energy: f64 = truth.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::InvalidArgument("normalized MSE of a zero-energy signal".into()));
    }
    let err: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (e - t) * (e - t))
        .sum();
    Ok(err / energy)
}

/// Worker count used when the caller does not pick one: `M`, capped at the
/// machine's available parallelism.
pub fn default_workers(segments: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    segments.clamp(1, cores)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Recovered coefficients in the original (unpermuted) order.
    pub theta_hat: Vector,
    /// `Psi theta_hat`, when a basis was supplied.
    pub x_hat: Option<Vector>,
    /// Seconds spent inside each segment's solve.
    pub per_segment_times: Vec<f64>,
    pub per_segment_status: Vec<SolveStatus>,
    pub per_segment_iterations: Vec<usize>,
    /// Sum of the per-segment solve times.
    pub t_total: f64,
    /// `t_total / M`.
    pub t_average: f64,
    /// Slowest segment.
    pub t_worst: f64,
    /// Elapsed time of the whole parallel decode, as observed by the caller.
    pub t_wall: f64,
    pub normalized_mse: Option<f64>,
}

impl ReconstructionReport {
    pub fn all_converged(&self) -> bool {
        self.per_segment_status
            .iter()
            .all(|s| *s == SolveStatus::Converged)
    }

    /// Worst segment status: infeasible over max-iterations over converged.
    pub fn overall_status(&self) -> SolveStatus {
        let rank = |s: &SolveStatus| match s {
            SolveStatus::Converged => 0,
            SolveStatus::MaxIterationsReached => 1,
            SolveStatus::Infeasible => 2,
        };
        self.per_segment_status
            .iter()
            .copied()
            .max_by_key(rank)
            .unwrap_or(SolveStatus::Converged)
    }

    /// Records the normalized MSE of `theta_hat` against the true coefficients.
    pub fn score_theta(&mut self, truth: &[f64]) -> Result<f64> {
        let mse = normalized_mse(truth, &self.theta_hat)?;
        self.normalized_mse = Some(mse);
        Ok(mse)
    }

    /// Records the normalized MSE of `x_hat` against the true signal.
    pub fn score_signal(&mut self, truth: &[f64]) -> Result<f64> {
        let x_hat = self
            .x_hat
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("report has no signal-domain estimate".into()))?;
        let mse = normalized_mse(truth, x_hat)?;
        self.normalized_mse = Some(mse);
        Ok(mse)
    }
}

struct SegmentOutcome {
    result: SolveResult,
    seconds: f64,
}

/// Decodes every segment with basis pursuit on up to `workers` threads, then
/// undoes the permutation and, if `psi` is given, maps back to the signal
/// domain.
pub fn reconstruct_parallel(
    s: &BlockDiagonalSensing,
    y: &[f64],
    p: Option<&Permutation>,
    psi: Option<&dyn Basis>,
    cfg: &BasisPursuitConfig,
    workers: usize,
) -> Result<ReconstructionReport> {
    cfg.validate()?;
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be >= 1".into()));
    }
    let n = s.total_cols();
    if y.len() != s.total_rows() {
        return Err(Error::DimensionMismatch {
            op: "reconstruct_parallel",
            left: shape(s.total_rows(), n),
            right: format!("measurements of length {}", y.len()),
        });
    }
    if let Some(p) = p {
        if p.size() != n {
            return Err(Error::DimensionMismatch {
                op: "reconstruct_parallel",
                left: shape(s.total_rows(), n),
                right: format!("permutation of size {}", p.size()),
            });
        }
    }
    if let Some(psi) = psi {
        if psi.dim() != n {
            return Err(Error::DimensionMismatch {
                op: "reconstruct_parallel",
                left: shape(s.total_rows(), n),
                right: format!("basis of dimension {}", psi.dim()),
            });
        }
        let deviation = psi.orthonormality_defect()?;
        if !(deviation <= ORTHONORMALITY_TOLERANCE) {
            return Err(Error::NotOrthonormal {
                tol: ORTHONORMALITY_TOLERANCE,
                deviation,
            });
        }
    }

    let plan = SegmentationPlan::from_sensing(s);
    let m = plan.num_segments();
    let segments = segment(y, &plan)?;
    let slots: Mutex<Vec<Option<Result<SegmentOutcome>>>> =
        Mutex::new((0..m).map(|_| None).collect());
    let next = AtomicUsize::new(0);

    let wall = Instant::now();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(m) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= m {
                    break;
                }
                let start = Instant::now();
                let outcome = basis_pursuit(s.blocks()[i].matrix(), &segments[i], cfg);
                let seconds = start.elapsed().as_secs_f64();
                let outcome = outcome.map(|result| SegmentOutcome { result, seconds });
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let t_wall = wall.elapsed().as_secs_f64();

    let mut permuted = Vec::with_capacity(n);
    let mut per_segment_times = Vec::with_capacity(m);
    let mut per_segment_status = Vec::with_capacity(m);
    let mut per_segment_iterations = Vec::with_capacity(m);
    for slot in slots.into_inner().expect("workers joined") {
        let outcome = slot.expect("every segment was claimed")?;
        permuted.extend_from_slice(&outcome.result.solution);
        per_segment_times.push(outcome.seconds);
        per_segment_status.push(outcome.result.status);
        per_segment_iterations.push(outcome.result.iterations);
    }

    // theta_hat = P^T theta_hat_dagger.
    let theta_hat = match p {
        Some(p) => p.invert().apply(&permuted)?,
        None => Vector::new(permuted)?,
    };
    let x_hat = match psi {
        Some(psi) => Some(Vector::new(psi.synthesize(&theta_hat)?)?),
        None => None,
    };

    let t_total: f64 = per_segment_times.iter().sum();
    let t_worst = per_segment_times.iter().copied().fold(0.0, f64::max);
    Ok(ReconstructionReport {
        theta_hat,
        x_hat,
        t_average: t_total / m as f64,
        t_total,
        t_worst,
        t_wall,
        per_segment_times,
        per_segment_status,
        per_segment_iterations,
        normalized_mse: None,
    })
}
