//! Reproducible measurement-count experiments: MSE sweeps, minimum
//! measurement search, balancing statistics and the image demo.
//!
//! Every trial owns a sub-seed derived from the experiment seed and its trial
//! index. The signal depends only on that sub-seed, the sensing block on
//! `(sub-seed, M, K)` and the permutation on `(sub-seed, M, mode)`, so all
//! cells of a sweep see the same signals and one record can be regenerated
//! in isolation.

mod config;
pub mod demo;
pub mod verify;

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{load_config, BalancingConfig, ExperimentConfig, KSweep, KSweepOverride, PermutationMode};

use crate::engine::{default_workers, normalized_mse, reconstruct_parallel};
use crate::error::{Error, Result};
use crate::matrix::Vector;
use crate::permutation::{balanced_oracle, balancing_stats, BalancingStats, Permutation};
use crate::sensing::{BlockDiagonalSensing, SensingBlock};
use crate::solver::{BasisPursuitConfig, SolveStatus};

const STREAM_SIGNAL: u64 = 1;
const STREAM_SENSING: u64 = 2;
const STREAM_PERMUTATION: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `base` and `parts` into an independent 64-bit seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Sub-seed of trial `trial` under experiment seed `seed`.
pub fn trial_subseed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[trial as u64])
}

/// `n`-vector with exactly `s` nonzeros at uniformly random positions. The
/// nonzeros are 1, or independent random signs when `rademacher` is set.
pub fn generate_signal<R: Rng + ?Sized>(n: usize, s: usize, rademacher: bool, rng: &mut R) -> Result<Vector> {
    if s > n {
        return Err(Error::InvalidArgument(format!("sparsity {s} exceeds length {n}")));
    }
    let mut x = vec![0.0; n];
    let mut support = sample(rng, n, s).into_vec();
    support.sort_unstable();
    for i in support {
        x[i] = if rademacher && rng.random::<bool>() { -1.0 } else { 1.0 };
    }
    Vector::new(x)
}

/// Everything needed to regenerate one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n: usize,
    pub sparsity: usize,
    pub m: usize,
    pub k: usize,
    pub mode: PermutationMode,
    pub rademacher: bool,
    pub trial: usize,
    pub subseed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: PermutationMode,
    pub trial: usize,
    pub mse: f64,
    pub t_total: f64,
    pub t_average: f64,
    pub t_worst: f64,
    pub t_wall: f64,
    pub status: SolveStatus,
    pub segment_status: Vec<SolveStatus>,
    pub subseed: u64,
}

impl TrialRecord {
    pub fn is_exact(&self, threshold: f64) -> bool {
        self.mse < threshold
    }

    /// Equality on everything except the timing fields.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        self.m == other.m
            && self.k == other.k
            && self.mode == other.mode
            && self.trial == other.trial
            && self.mse.to_bits() == other.mse.to_bits()
            && self.status == other.status
            && self.segment_status == other.segment_status
            && self.subseed == other.subseed
    }
}

/// The permutation a trial uses; `None` stands for the identity.
pub fn trial_permutation(spec: &TrialSpec, support: &[usize]) -> Result<Option<Permutation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.subseed,
        &[STREAM_PERMUTATION, spec.m as u64, spec.mode.tag()],
    ));
    Ok(match spec.mode {
        PermutationMode::None => None,
        PermutationMode::Random => Some(Permutation::random(spec.n, &mut rng)?),
        PermutationMode::Oracle => Some(balanced_oracle(support, spec.n, spec.m, &mut rng)?),
    })
}

/// Builds, encodes (in the coefficient domain) and decodes one trial.
pub fn run_trial(spec: &TrialSpec, solver: &BasisPursuitConfig, workers: usize) -> Result<TrialRecord> {
    if spec.m == 0 || spec.n % spec.m != 0 || spec.k % spec.m != 0 || spec.k == 0 {
        return Err(Error::Config(format!(
            "trial needs M | n and M | K, got n={}, M={}, K={}",
            spec.n, spec.m, spec.k
        )));
    }
    let mut signal_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.subseed, &[STREAM_SIGNAL]));
    let theta = generate_signal(spec.n, spec.sparsity, spec.rademacher, &mut signal_rng)?;
    let support: Vec<usize> = (0..spec.n).filter(|&i| theta[i] != 0.0).collect();

    let (k0, l) = (spec.k / spec.m, spec.n / spec.m);
    let mut sensing_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.subseed,
        &[STREAM_SENSING, spec.m as u64, spec.k as u64],
    ));
    let a0 = SensingBlock::gaussian(k0, l, &mut sensing_rng)?;
    let sensing = BlockDiagonalSensing::repeated(a0, spec.m)?.with_seed(Some(spec.subseed));

    let p = trial_permutation(spec, &support)?;
    let permuted = match &p {
        Some(p) => p.apply(&theta)?,
        None => theta.clone(),
    };
    let y = sensing.apply_blockwise(&permuted)?;
    let report = reconstruct_parallel(&sensing, &y, p.as_ref(), None, solver, workers)?;
    let mse = normalized_mse(&theta, &report.theta_hat)?;
    Ok(TrialRecord {
        m: spec.m,
        k: spec.k,
        mode: spec.mode,
        trial: spec.trial,
        mse,
        t_total: report.t_total,
        t_average: report.t_average,
        t_worst: report.t_worst,
        t_wall: report.t_wall,
        status: report.overall_status(),
        segment_status: report.per_segment_status,
        subseed: spec.subseed,
    })
}

/// Maps `f` over `0..count` on up to `workers` threads; output is in index
/// order regardless of scheduling.
fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..count).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = f(i);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|s| s.expect("every index was claimed"))
        .collect()
}

/// Worker budget for a config: explicit, else the machine's parallelism.
fn budget(cfg: &ExperimentConfig) -> usize {
    cfg.workers.unwrap_or_else(|| default_workers(usize::MAX))
}

/// Runs trials `range` of one cell. With more than one worker the trials run
/// concurrently and each decode is single-threaded, so the total number of
/// concurrent solves never exceeds the budget.
fn run_cell_trials(
    cfg: &ExperimentConfig,
    m: usize,
    k: usize,
    mode: PermutationMode,
    range: std::ops::Range<usize>,
    workers: usize,
) -> Result<Vec<TrialRecord>> {
    let start = range.start;
    let decode_workers = if workers > 1 && range.len() > 1 { 1 } else { workers.min(m) };
    parallel_map(range.len(), workers, |i| {
        let trial = start + i;
        let spec = TrialSpec {
            n: cfg.n,
            sparsity: cfg.sparsity,
            m,
            k,
            mode,
            rademacher: cfg.rademacher,
            trial,
            subseed: trial_subseed(cfg.seed, trial),
        };
        run_trial(&spec, &cfg.solver, decode_workers)
    })
}

/// Mean timings over a set of trials, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub t_total: f64,
    pub t_average: f64,
    pub t_worst: f64,
    pub t_wall: f64,
}

impl TimingSummary {
    fn mean<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Option<Self> {
        let mut acc = TimingSummary::default();
        let mut count = 0usize;
        for r in records {
            acc.t_total += r.t_total;
            acc.t_average += r.t_average;
            acc.t_worst += r.t_worst;
            acc.t_wall += r.t_wall;
            count += 1;
        }
        (count > 0).then(|| {
            let c = count as f64;
            TimingSummary {
                t_total: acc.t_total / c,
                t_average: acc.t_average / c,
                t_worst: acc.t_worst / c,
                t_wall: acc.t_wall / c,
            }
        })
    }
}

/// Aggregate of one `(M, K, mode)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: PermutationMode,
    pub trials: usize,
    pub mean_mse: f64,
    pub success_rate: f64,
    pub timing: TimingSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl SweepOutput {
    pub fn cell(&self, m: usize, k: usize, mode: PermutationMode) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.m == m && c.k == k && c.mode == mode)
    }

    /// Mean-MSE curve `(K, mean MSE)` for one `(M, mode)`, in sweep order.
    pub fn curve(&self, m: usize, mode: PermutationMode) -> Vec<(usize, f64)> {
        self.cells
            .iter()
            .filter(|c| c.m == m && c.mode == mode)
            .map(|c| (c.k, c.mean_mse))
            .collect()
    }
}

/// Every `(M, mode, K, trial)` combination of the config.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let workers = budget(cfg);
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for &m in &cfg.m_values {
        for &mode in &cfg.permutation_mode {
            for k in cfg.k_values(m) {
                let cell = run_cell_trials(cfg, m, k, mode, 0..cfg.trials, workers)?;
                let exact = cell.iter().filter(|r| r.is_exact(cfg.success_threshold)).count();
                cells.push(CellSummary {
                    m,
                    k,
                    mode,
                    trials: cell.len(),
                    mean_mse: cell.iter().map(|r| r.mse).sum::<f64>() / cell.len() as f64,
                    success_rate: exact as f64 / cell.len() as f64,
                    timing: TimingSummary::mean(&cell).unwrap_or_default(),
                });
                records.extend(cell);
            }
        }
    }
    Ok(SweepOutput {
        config: cfg.clone(),
        cells,
        records,
    })
}

/// Where the success transition sits relative to the swept range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRequireOutcome {
    /// Some swept K passes and the one below it does not.
    Found,
    /// The smallest swept K already passes; the true value may be lower.
    BelowRange,
    /// No swept K passes.
    NotFoundInRange,
}

/// Pass/fail of one measurement count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCheck {
    #[serde(rename = "K")]
    pub k: usize,
    pub passed: bool,
    /// Exact trials out of the full count; absent when the cell was cut
    /// short because it could no longer pass.
    pub successes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRequireEntry {
    #[serde(rename = "M")]
    pub m: usize,
    pub mode: PermutationMode,
    pub outcome: KRequireOutcome,
    pub k_require: Option<usize>,
    /// Mean timings over the exact trials at the first passing K.
    pub timing: Option<TimingSummary>,
    pub checked: Vec<CellCheck>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRequireOutput {
    pub config: ExperimentConfig,
    pub entries: Vec<KRequireEntry>,
}

impl KRequireOutput {
    pub fn entry(&self, m: usize, mode: PermutationMode) -> Option<&KRequireEntry> {
        self.entries.iter().find(|e| e.m == m && e.mode == mode)
    }

    pub fn k_require(&self, m: usize, mode: PermutationMode) -> Option<usize> {
        self.entry(m, mode).and_then(|e| e.k_require)
    }
}

/// Largest failure count that still meets `rate` over `trials`.
fn allowed_failures(trials: usize, rate: f64) -> usize {
    // Guard against 0.95 * 100 = 94.99999...
    let needed = ((rate * trials as f64) - 1e-9).ceil().max(0.0) as usize;
    trials - needed.min(trials)
}

/// Smallest swept K whose exact-trial fraction reaches the config's success
/// rate, per `(M, mode)`. K is scanned upward and the scan stops at the first
/// passing value. A cell stops early once its failures exceed the allowance;
/// trials run in index order, so that decision does not depend on the worker
/// count.
pub fn find_k_require(cfg: &ExperimentConfig) -> Result<KRequireOutput> {
    cfg.validate()?;
    let workers = budget(cfg);
    let allowed = allowed_failures(cfg.trials, cfg.success_rate);
    let mut entries = Vec::new();
    for &m in &cfg.m_values {
        for &mode in &cfg.permutation_mode {
            let mut checked = Vec::new();
            let mut found: Option<(usize, Vec<TrialRecord>)> = None;
            for k in cfg.k_values(m) {
                let mut cell = Vec::with_capacity(cfg.trials);
                let mut failures = 0;
                let chunk = workers.max(1);
                let mut next = 0;
                while next < cfg.trials && failures <= allowed {
                    let end = (next + chunk).min(cfg.trials);
                    let batch = run_cell_trials(cfg, m, k, mode, next..end, workers)?;
                    failures += batch.iter().filter(|r| !r.is_exact(cfg.success_threshold)).count();
                    cell.extend(batch);
                    next = end;
                }
                let passed = failures <= allowed;
                log::info!("M={m} mode={mode} K={k}: {}", if passed { "pass" } else { "fail" });
                checked.push(CellCheck {
                    k,
                    passed,
                    successes: passed.then(|| cfg.trials - failures),
                });
                if passed {
                    found = Some((k, cell));
                    break;
                }
            }
            let entry = match found {
                Some((k, cell)) => {
                    let outcome = if checked.len() == 1 {
                        KRequireOutcome::BelowRange
                    } else {
                        KRequireOutcome::Found
                    };
                    let exact = cell.iter().filter(|r| r.is_exact(cfg.success_threshold));
                    KRequireEntry {
                        m,
                        mode,
                        outcome,
                        k_require: (outcome == KRequireOutcome::Found).then_some(k),
                        timing: TimingSummary::mean(exact),
                        checked,
                        records: cell,
                    }
                }
                None => KRequireEntry {
                    m,
                    mode,
                    outcome: KRequireOutcome::NotFoundInRange,
                    k_require: None,
                    timing: None,
                    checked,
                    records: Vec::new(),
                },
            };
            entries.push(entry);
        }
    }
    Ok(KRequireOutput {
        config: cfg.clone(),
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancingReport {
    pub config: BalancingConfig,
    pub segment_length: usize,
    pub stats: BalancingStats,
}

/// Per-segment sparsity of random permutations of random supports.
pub fn run_balancing_stats(cfg: &BalancingConfig) -> Result<BalancingReport> {
    if cfg.segments == 0 || cfg.n % cfg.segments != 0 {
        return Err(Error::Config(format!(
            "n = {} is not divisible by {} segments",
            cfg.n, cfg.segments
        )));
    }
    let l = cfg.n / cfg.segments;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stats = balancing_stats(cfg.n, l, cfg.segments, cfg.sparsity, cfg.trials, &mut rng)?;
    Ok(BalancingReport {
        config: *cfg,
        segment_length: l,
        stats,
    })
}

/// Column order of the per-trial CSV.
pub const CSV_COLUMNS: [&str; 11] = [
    "M", "K", "mode", "trial", "mse", "t_total", "t_average", "t_worst", "t_wall", "status", "subseed",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    mode: &'a str,
    trial: usize,
    mse: f64,
    t_total: f64,
    t_average: f64,
    t_worst: f64,
    t_wall: f64,
    status: &'a str,
    subseed: u64,
}

/// One row per trial with the columns in [`CSV_COLUMNS`].
pub fn write_trials_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    for r in records {
        w.serialize(CsvRow {
            m: r.m,
            k: r.k,
            mode: r.mode.as_str(),
            trial: r.trial,
            mse: r.mse,
            t_total: r.t_total,
            t_average: r.t_average,
            t_worst: r.t_worst,
            t_wall: r.t_wall,
            status: r.status.as_str(),
            subseed: r.subseed,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

pub fn write_trials_csv_file(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trials_csv(std::io::BufWriter::new(file), records)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
