//! Fast self-check of the library's core invariants, run by `permcs verify`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, run_mse_sweep, run_trial, trial_subseed, ExperimentConfig, KSweep, PermutationMode, TrialSpec,
};
use crate::engine::{segment, SegmentationPlan};
use crate::error::Result;
use crate::matrix::{matmul, transpose, Basis, DenseMatrix, KroneckerBasis};
use crate::permutation::{balancing_stats, Permutation};
use crate::sensing::{block_diagonal, build_measurement_matrix_with, encode, SensingBlock};
use crate::solver::{basis_pursuit, l0_bruteforce, BasisPursuitConfig, SolveStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn permutation_orthogonality(rng: &mut ChaCha8Rng) -> Result<Check> {
    let p = Permutation::random(64, rng)?;
    let m = p.to_matrix();
    let gram = matmul(&m, &transpose(&m))?;
    let identity = gram == DenseMatrix::identity(64)?;
    let inverse = p.invert().to_matrix() == transpose(&m);
    Ok(check(
        "permutation_orthogonality",
        identity && inverse,
        format!("P P^T = I: {identity}, P^-1 = P^T: {inverse}"),
    ))
}

fn encoder_linearity(rng: &mut ChaCha8Rng) -> Result<Check> {
    let psi = KroneckerBasis::dct_2d(8, 8)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let blocks = (0..4)
            .map(|_| SensingBlock::gaussian(4, 16, rng))
            .collect::<Result<Vec<_>>>()?;
        let s = block_diagonal(blocks)?;
        let p = Permutation::random(64, rng)?;
        let phi = build_measurement_matrix_with(&s, Some(&p), &psi)?;
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = encode(&phi, &x)?;
        let staged = s.apply_blockwise(&p.apply(&psi.analyze(&x)?)?)?;
        let diff = direct.axpby(1.0, &staged, -1.0)?.norm2();
        worst = worst.max(diff / staged.norm2());
    }
    Ok(check(
        "encoder_linearity",
        worst < 1e-10,
        format!("max relative difference {worst:.3e}"),
    ))
}

fn segmentation_round_trip(rng: &mut ChaCha8Rng) -> Result<Check> {
    let counts: Vec<usize> = (0..5).map(|_| rng.random_range(1..6)).collect();
    let plan = SegmentationPlan::new(vec![1; counts.len()], counts)?;
    let y: Vec<f64> = (0..plan.total_measurements()).map(|_| rng.random()).collect();
    let joined: Vec<f64> = segment(&y, &plan)?.iter().flat_map(|v| v.iter().copied()).collect();
    Ok(check("segmentation_round_trip", joined == y, format!("{} measurements", y.len())))
}

fn solver_matches_l0(rng: &mut ChaCha8Rng) -> Result<Check> {
    let cfg = BasisPursuitConfig::default();
    let mut agree = 0;
    let total = 20;
    for _ in 0..total {
        let spikes = rng.random_range(1..=3);
        // Inside the l1-recoverable regime; closer to 2 * spikes the l1 and
        // l0 solutions can legitimately differ.
        let rows = 2 * spikes + 6 + rng.random_range(0..3);
        let a = SensingBlock::gaussian(rows, 16, rng)?.matrix().clone();
        let mut theta = vec![0.0; 16];
        for i in sample(rng, 16, spikes) {
            theta[i] = rng.random_range(0.5..2.0) * if rng.random() { 1.0 } else { -1.0 };
        }
        let y = a.matvec(&theta)?;
        let bp = basis_pursuit(&a, &y, &cfg)?;
        let l0 = l0_bruteforce(&a, &y, spikes)?;
        let diff = bp.solution.axpby(1.0, &l0.solution, -1.0)?.norm2() / l0.solution.norm2();
        if bp.support(1e-6) == l0.support(1e-9) && diff < 1e-4 {
            agree += 1;
        }
    }
    Ok(check(
        "solver_matches_l0",
        agree * 100 >= 95 * total,
        format!("{agree}/{total} instances agree"),
    ))
}

fn pipeline_round_trip(seed: u64) -> Result<Check> {
    let cfg = BasisPursuitConfig::default();
    let mut exact = 0;
    for trial in 0..10 {
        let spec = TrialSpec {
            n: 240,
            sparsity: 12,
            m: 4,
            k: 96,
            mode: PermutationMode::Oracle,
            rademacher: false,
            trial,
            subseed: trial_subseed(seed, trial),
        };
        if run_trial(&spec, &cfg, 1)?.mse < 2e-5 {
            exact += 1;
        }
    }
    Ok(check("pipeline_round_trip", exact >= 9, format!("{exact}/10 exact")))
}

fn balancing(rng: &mut ChaCha8Rng) -> Result<Check> {
    let stats = balancing_stats(1000, 100, 10, 60, 10_000, rng)?;
    let ok = (stats.mean_per_segment - 6.0).abs() < 0.05 && (stats.std_per_segment - 2.25).abs() < 0.1;
    Ok(check(
        "balancing_statistics",
        ok,
        format!("mean {:.4}, std {:.4}", stats.mean_per_segment, stats.std_per_segment),
    ))
}

fn infeasible_is_flagged() -> Result<Check> {
    let a = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]])?;
    let r = basis_pursuit(&a, &[1.0, 2.0], &BasisPursuitConfig::default())?;
    Ok(check(
        "infeasible_is_flagged",
        r.status == SolveStatus::Infeasible,
        format!("status {}", r.status),
    ))
}

fn determinism(seed: u64) -> Result<Check> {
    let cfg = ExperimentConfig {
        n: 120,
        sparsity: 6,
        m_values: vec![1, 4],
        k_sweep: KSweep::new(40, 60, 20),
        trials: 3,
        seed,
        permutation_mode: vec![PermutationMode::None, PermutationMode::Random, PermutationMode::Oracle],
        workers: Some(1),
        ..ExperimentConfig::default()
    };
    let a = run_mse_sweep(&cfg)?;
    let b = run_mse_sweep(&ExperimentConfig { workers: Some(4), ..cfg })?;
    let same = a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| x.same_outcome(y));
    Ok(check("determinism", same, format!("{} records compared", a.records.len())))
}

fn cubic_cost() -> Result<Check> {
    let equal = SegmentationPlan::new(vec![30; 4], vec![1; 4])?.cubic_cost();
    let skewed = SegmentationPlan::new(vec![20, 30, 30, 40], vec![1; 4])?.cubic_cost();
    Ok(check(
        "equal_split_cost",
        equal < skewed && 16 * equal == 120u128.pow(3),
        format!("equal {equal}, skewed {skewed}"),
    ))
}

/// Runs every check; a check that errors counts as failed.
pub fn run_suite(seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x7665_7269_6679]));
    let results = vec![
        ("permutation_orthogonality", permutation_orthogonality(&mut rng)),
        ("encoder_linearity", encoder_linearity(&mut rng)),
        ("segmentation_round_trip", segmentation_round_trip(&mut rng)),
        ("equal_split_cost", cubic_cost()),
        ("solver_matches_l0", solver_matches_l0(&mut rng)),
        ("infeasible_is_flagged", infeasible_is_flagged()),
        ("pipeline_round_trip", pipeline_round_trip(seed)),
        ("balancing_statistics", balancing(&mut rng)),
        ("determinism", determinism(seed)),
    ];
    let checks: Vec<Check> = results
        .into_iter()
        .map(|(name, r)| r.unwrap_or_else(|e| check(name, false, format!("error: {e}"))))
        .collect();
    VerifyReport {
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
