//! Acceptance suite. Prints one `[PASS]` / `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Run alone with `cargo test -p permcs-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use permcs_core::engine::{normalized_mse, reconstruct_parallel};
use permcs_core::experiments::{
    find_k_require, run_balancing_stats, run_mse_sweep, trial_subseed, BalancingConfig, ExperimentConfig,
    KRequireOutcome, KRequireOutput, KSweep, KSweepOverride, PermutationMode,
};
use permcs_core::matrix::{Basis, KroneckerBasis};
use permcs_core::permutation::{balanced_oracle, Permutation};
use permcs_core::sensing::{block_diagonal, build_measurement_matrix_with, encode, BlockDiagonalSensing, SensingBlock};
use permcs_core::solver::{basis_pursuit, l0_bruteforce, BasisPursuitConfig, SolveStatus};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2016;
const EXACT: f64 = 2e-5;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den
}

fn balancing() -> Outcome {
    let report = run_balancing_stats(&BalancingConfig {
        n: 1000,
        segments: 10,
        sparsity: 60,
        trials: 100_000,
        seed: SEED,
    })
    .expect("balancing run");
    let (mean, std) = (report.stats.mean_per_segment, report.stats.std_per_segment);
    // Per-segment count is hypergeometric: 60 draws, 100 of 1000 marked.
    let exact_std = (60.0 * 0.1 * 0.9 * (940.0 / 999.0) as f64).sqrt();
    outcome(
        (mean - 6.0).abs() <= 0.02 && (std - 2.28).abs() <= 0.06,
        format!("mean {mean:.4} (target 6.00 +- 0.02), std {std:.4} (target 2.28 +- 0.06, hypergeometric {exact_std:.4})"),
    )
}

fn encoder_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let psi = KroneckerBasis::dct_2d(16, 16).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = [1, 2, 4, 8, 16][rng.random_range(0..5)];
        let l = 256 / m;
        let blocks = (0..m)
            .map(|_| SensingBlock::gaussian(rng.random_range(1..=l / 2 + 1), l, &mut rng).unwrap())
            .collect();
        let s = block_diagonal(blocks).unwrap();
        let p = Permutation::random(256, &mut rng).unwrap();
        let phi = build_measurement_matrix_with(&s, Some(&p), &psi).unwrap();
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let one_shot = encode(&phi, &x).unwrap();
        let staged = s
            .apply_blockwise(&p.apply(&psi.analyze(&x).unwrap()).unwrap())
            .unwrap();
        worst = worst.max(rel_diff(&one_shot, &staged));
    }
    outcome(worst < 1e-10, format!("max relative difference {worst:.3e} over 100 instances"))
}

/// Minimum-measurement search shared by the phase-point, benefit,
/// monotonicity and timing criteria.
fn k_require_table() -> KRequireOutput {
    let cfg = ExperimentConfig {
        n: 1200,
        sparsity: 60,
        m_values: vec![1, 4, 10],
        k_sweep: KSweep::new(240, 340, 10),
        k_sweep_overrides: vec![
            KSweepOverride { m: 4, start: 240, stop: 480, step: 8 },
            KSweepOverride { m: 10, start: 300, stop: 600, step: 10 },
        ],
        trials: 50,
        seed: SEED,
        permutation_mode: vec![PermutationMode::None, PermutationMode::Oracle],
        success_threshold: EXACT,
        success_rate: 0.95,
        // One worker keeps the per-segment timings free of contention.
        workers: Some(1),
        ..ExperimentConfig::default()
    };
    find_k_require(&cfg).expect("k-require run")
}

fn describe(table: &KRequireOutput, m: usize, mode: PermutationMode) -> String {
    match table.entry(m, mode) {
        Some(e) => match e.outcome {
            KRequireOutcome::Found => format!("{}", e.k_require.unwrap()),
            other => format!("{other:?}"),
        },
        None => "missing".into(),
    }
}

fn phase_point(table: &KRequireOutput) -> Outcome {
    let k = table.k_require(1, PermutationMode::None);
    outcome(
        k.is_some_and(|k| (252..=308).contains(&k)),
        format!("M=1 K_require = {} (band 252..=308)", describe(table, 1, PermutationMode::None)),
    )
}

fn permutation_benefit(table: &KRequireOutput) -> Outcome {
    let gap = |m| {
        let none = table.k_require(m, PermutationMode::None)?;
        let oracle = table.k_require(m, PermutationMode::Oracle)?;
        Some(none as i64 - oracle as i64)
    };
    let (g4, g10) = (gap(4), gap(10));
    outcome(
        g4.is_some_and(|g| g >= 25) && g10.is_some_and(|g| g >= 50),
        format!(
            "M=4: {} -> {} (gap {g4:?}, need >= 25); M=10: {} -> {} (gap {g10:?}, need >= 50)",
            describe(table, 4, PermutationMode::None),
            describe(table, 4, PermutationMode::Oracle),
            describe(table, 10, PermutationMode::None),
            describe(table, 10, PermutationMode::Oracle),
        ),
    )
}

fn monotonicity(table: &KRequireOutput) -> Outcome {
    let cfg = ExperimentConfig {
        n: 1200,
        sparsity: 60,
        m_values: vec![2, 4],
        k_sweep: KSweep::new(200, 400, 20),
        trials: 100,
        seed: SEED,
        permutation_mode: vec![PermutationMode::None, PermutationMode::Oracle],
        workers: None,
        ..ExperimentConfig::default()
    };
    let sweep = run_mse_sweep(&cfg).expect("mse sweep");
    let mut notes = Vec::new();

    // Mean MSE may not rise by more than 10% of the signal energy between
    // neighbouring K (MSE is already normalized by the energy).
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    for &m in &cfg.m_values {
        for &mode in &cfg.permutation_mode {
            for w in sweep.curve(m, mode).windows(2) {
                worst_rise = worst_rise.max(w[1].1 - w[0].1);
            }
        }
    }
    let curves_ok = worst_rise <= 0.10;
    notes.push(format!("largest step-up in mean MSE {worst_rise:.4} (limit 0.10)"));

    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for &m in &cfg.m_values {
        for k in cfg.k_values(m) {
            let none = sweep.cell(m, k, PermutationMode::None).unwrap().mean_mse;
            let oracle = sweep.cell(m, k, PermutationMode::Oracle).unwrap().mean_mse;
            worst_excess = worst_excess.max(oracle - none);
        }
    }
    let oracle_ok = worst_excess <= 0.05;
    notes.push(format!("largest oracle-minus-none mean MSE {worst_excess:.4} (limit 0.05)"));

    let mut k_ok = true;
    for mode in [PermutationMode::None, PermutationMode::Oracle] {
        let ks: Vec<Option<usize>> = [1, 4, 10].iter().map(|&m| table.k_require(m, mode)).collect();
        let ordered = ks.iter().all(Option::is_some) && ks.windows(2).all(|w| w[0] <= w[1]);
        k_ok &= ordered;
        notes.push(format!("{mode} K_require over M=1,4,10: {ks:?}"));
    }
    outcome(curves_ok && oracle_ok && k_ok, notes.join("; "))
}

fn timing(table: &KRequireOutput) -> Outcome {
    let Some(central) = table.entry(1, PermutationMode::None).and_then(|e| e.timing) else {
        return outcome(false, "no M=1 timing".into());
    };
    let mut ok = true;
    let mut notes = vec![format!("M=1 t_total {:.4}s", central.t_total)];
    for mode in [PermutationMode::None, PermutationMode::Oracle] {
        let Some(t) = table.entry(4, mode).and_then(|e| e.timing) else {
            return outcome(false, format!("no M=4 {mode} timing"));
        };
        ok &= t.t_average < 0.5 * central.t_total
            && t.t_worst < 0.5 * central.t_total
            && t.t_total < central.t_total;
        notes.push(format!(
            "M=4 {mode}: t_total {:.4}s, t_average {:.4}s, t_worst {:.4}s",
            t.t_total, t.t_average, t.t_worst
        ));
    }
    outcome(ok, notes.join("; "))
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let cfg = BasisPursuitConfig::default();
    let (mut agree, mut sparse_bp, mut infeasible_converged) = (0, 0, 0);
    // Disagreements where the l0 solution is not the l1 minimizer at all.
    let mut l1_beats_l0 = 0;
    let total = 200;
    for _ in 0..total {
        let spikes = rng.random_range(1..=3);
        let cols = rng.random_range(12..=20);
        let rows = rng.random_range(2 * spikes + 2..=cols);
        let a = SensingBlock::gaussian(rows, cols, &mut rng).unwrap().matrix().clone();
        let mut theta = vec![0.0; cols];
        for i in sample(&mut rng, cols, spikes) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            theta[i] = sign * rng.random_range(0.5..2.0);
        }
        let y = a.matvec(&theta).unwrap();
        let bp = basis_pursuit(&a, &y, &cfg).unwrap();
        let l0 = l0_bruteforce(&a, &y, spikes).unwrap();
        if bp.status == SolveStatus::Converged && bp.constraint_residual > cfg.abs_tolerance {
            infeasible_converged += 1;
        }
        let scale = bp.solution.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bp_support = bp.support(1e-6 * scale);
        if bp_support.len() == spikes {
            sparse_bp += 1;
        }
        if bp_support == l0.support(0.0) && rel_diff(&bp.solution, &l0.solution) < 1e-4 {
            agree += 1;
        } else if bp.status == SolveStatus::Converged && bp.solution.norm1() < l0.solution.norm1() - 1e-6 {
            l1_beats_l0 += 1;
        }
    }
    outcome(
        agree * 100 >= 95 * total && infeasible_converged == 0,
        format!(
            "{agree}/{total} match l0 (need 95%); {sparse_bp}/{total} BP solutions have the l0 sparsity; \
             {l1_beats_l0}/{} mismatches have a feasible point of smaller l1 norm than the l0 solution; \
             {infeasible_converged} converged results violate feasibility",
            total - agree
        ),
    )
}

fn pipeline_round_trip() -> Outcome {
    let (n, s, m, k) = (240, 12, 4, 96);
    let psi = KroneckerBasis::dct_2d(16, 15).unwrap();
    let cfg = BasisPursuitConfig::default();
    let (mut exact, mut worst_gap) = (0, 0.0f64);
    for trial in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_subseed(SEED, trial));
        let mut theta = vec![0.0; n];
        let mut support = sample(&mut rng, n, s).into_vec();
        support.sort_unstable();
        for &i in &support {
            theta[i] = 1.0;
        }
        let a0 = SensingBlock::gaussian(k / m, n / m, &mut rng).unwrap();
        let sensing = BlockDiagonalSensing::repeated(a0, m).unwrap();
        let p = balanced_oracle(&support, n, m, &mut rng).unwrap();
        let x = psi.synthesize(&theta).unwrap();
        let phi = build_measurement_matrix_with(&sensing, Some(&p), &psi).unwrap();
        let y = encode(&phi, &x).unwrap();
        let report = reconstruct_parallel(&sensing, &y, Some(&p), Some(&psi), &cfg, m).unwrap();
        let theta_mse = normalized_mse(&theta, &report.theta_hat).unwrap();
        let x_mse = normalized_mse(&x, report.x_hat.as_ref().unwrap()).unwrap();
        if x_mse < EXACT {
            exact += 1;
        }
        // Relative agreement, with an absolute floor for exactly recovered trials.
        let gap = (theta_mse - x_mse).abs() / theta_mse.max(1e-12);
        worst_gap = worst_gap.max(gap);
    }
    outcome(
        exact * 10 >= 9 * 50 && worst_gap <= 1e-9,
        format!("{exact}/50 exact (need 45); max |mse_theta - mse_x| / max(mse_theta, 1e-12) = {worst_gap:.3e}"),
    )
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        n: 240,
        sparsity: 12,
        m_values: vec![1, 4],
        k_sweep: KSweep::new(48, 120, 24),
        trials: 6,
        seed: SEED,
        permutation_mode: vec![PermutationMode::None, PermutationMode::Random, PermutationMode::Oracle],
        workers: Some(1),
        ..ExperimentConfig::default()
    };
    let parallel = ExperimentConfig { workers: Some(4), ..cfg.clone() };
    let a = run_mse_sweep(&cfg).unwrap();
    let b = run_mse_sweep(&cfg).unwrap();
    let c = run_mse_sweep(&parallel).unwrap();
    let same = |x: &[permcs_core::experiments::TrialRecord], y: &[permcs_core::experiments::TrialRecord]| {
        x.len() == y.len() && x.iter().zip(y).all(|(r, s)| r.same_outcome(s))
    };
    let sweeps_ok = same(&a.records, &b.records) && same(&a.records, &c.records);

    let kr_cfg = ExperimentConfig { k_sweep: KSweep::new(24, 120, 12), success_rate: 0.8, ..cfg };
    let ka = find_k_require(&kr_cfg).unwrap();
    let kb = find_k_require(&ExperimentConfig { workers: Some(4), ..kr_cfg }).unwrap();
    let kr_ok = ka.entries.len() == kb.entries.len()
        && ka.entries.iter().zip(&kb.entries).all(|(x, y)| {
            x.outcome == y.outcome && x.k_require == y.k_require && x.checked == y.checked && same(&x.records, &y.records)
        });
    outcome(
        sweeps_ok && kr_ok,
        format!(
            "{} sweep records identical across repeats and workers 1/4: {sweeps_ok}; k-require tables identical: {kr_ok}",
            a.records.len()
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id, name, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        eprintln!("  criterion {id} took {:.1}s", t.elapsed().as_secs_f64());
        results.push((id, name, o));
    };

    record(1, "balancing statistics", &balancing);
    record(2, "encoder linearity", &encoder_linearity);
    let t = Instant::now();
    let table = k_require_table();
    eprintln!("  shared K_require search took {:.1}s", t.elapsed().as_secs_f64());
    record(3, "centralized phase point", &|| phase_point(&table));
    record(4, "permutation benefit", &|| permutation_benefit(&table));
    record(5, "monotonicity", &|| monotonicity(&table));
    record(6, "timing", &|| timing(&table));
    record(7, "solver oracle equivalence", &solver_oracle);
    record(8, "pipeline round trip", &pipeline_round_trip);
    record(9, "determinism", &determinism);

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id}: {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
