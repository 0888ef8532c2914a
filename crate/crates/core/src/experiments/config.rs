use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::solver::BasisPursuitConfig;

/// How the coefficient vector is reordered before segmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    /// Identity: segments are contiguous blocks of the original vector.
    None,
    /// Uniform random permutation, independent of the signal.
    Random,
    /// Support-aware permutation giving every segment `S / M` nonzeros.
    Oracle,
}

impl PermutationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PermutationMode::None => "none",
            PermutationMode::Random => "random",
            PermutationMode::Oracle => "oracle",
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        match self {
            PermutationMode::None => 0,
            PermutationMode::Random => 1,
            PermutationMode::Oracle => 2,
        }
    }
}

impl fmt::Display for PermutationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PermutationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PermutationMode::None),
            "random" => Ok(PermutationMode::Random),
            "oracle" => Ok(PermutationMode::Oracle),
            other => Err(Error::Config(format!(
                "unknown permutation mode {other:?} (expected none, random or oracle)"
            ))),
        }
    }
}

/// Inclusive range `start, start + step, ..., <= stop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSweep {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl KSweep {
    pub fn new(start: usize, stop: usize, step: usize) -> Self {
        Self { start, stop, step }
    }

    pub fn values(&self) -> Vec<usize> {
        if self.step == 0 || self.start > self.stop {
            return Vec::new();
        }
        (self.start..=self.stop).step_by(self.step).collect()
    }
}

/// Replaces the global sweep for one segment count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSweepOverride {
    pub m: usize,
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Signal length.
    pub n: usize,
    /// Nonzeros per signal.
    pub sparsity: usize,
    pub m_values: Vec<usize>,
    pub k_sweep: KSweep,
    pub k_sweep_overrides: Vec<KSweepOverride>,
    pub trials: usize,
    pub seed: u64,
    /// A single mode or a list; every mode runs on the same signals.
    #[serde(deserialize_with = "one_or_many")]
    pub permutation_mode: Vec<PermutationMode>,
    /// Draw nonzeros as random signs instead of all ones.
    pub rademacher: bool,
    /// A trial is exact when its normalized MSE is below this.
    pub success_threshold: f64,
    /// Fraction of exact trials needed to accept a measurement count.
    pub success_rate: f64,
    pub solver: BasisPursuitConfig,
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<PermutationMode>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PermutationMode),
        Many(Vec<PermutationMode>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(m) => vec![m],
        OneOrMany::Many(v) => v,
    })
}

impl Default for ExperimentConfig {
    /// Desk-scale version of the centralized-vs-segmented comparison.
    fn default() -> Self {
        Self {
            n: 1200,
            sparsity: 60,
            m_values: vec![1, 4],
            k_sweep: KSweep::new(200, 400, 20),
            k_sweep_overrides: Vec::new(),
            trials: 100,
            seed: 2016,
            permutation_mode: vec![PermutationMode::None, PermutationMode::Oracle],
            rademacher: false,
            success_threshold: 2e-5,
            success_rate: 0.95,
            solver: BasisPursuitConfig::default(),
            workers: None,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = load_config(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Measurement counts swept for `m` segments.
    pub fn k_values(&self, m: usize) -> Vec<usize> {
        self.k_sweep_overrides
            .iter()
            .rev()
            .find(|o| o.m == m)
            .map_or(self.k_sweep, |o| KSweep::new(o.start, o.stop, o.step))
            .values()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return fail("n must be >= 1".into());
        }
        if self.sparsity == 0 || self.sparsity > self.n {
            return fail(format!("sparsity must lie in 1..={}, got {}", self.n, self.sparsity));
        }
        if self.m_values.is_empty() {
            return fail("m_values is empty".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.permutation_mode.is_empty() {
            return fail("permutation_mode is empty".into());
        }
        if !(self.success_threshold > 0.0) {
            return fail("success_threshold must be positive".into());
        }
        if !(self.success_rate > 0.0 && self.success_rate <= 1.0) {
            return fail("success_rate must lie in (0, 1]".into());
        }
        if self.workers == Some(0) {
            return fail("workers must be >= 1".into());
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        for o in &self.k_sweep_overrides {
            if !self.m_values.contains(&o.m) {
                return fail(format!("k_sweep_overrides names M={} which is not in m_values", o.m));
            }
        }
        for &m in &self.m_values {
            if m == 0 || self.n % m != 0 {
                return fail(format!("n = {} is not divisible by M = {m}", self.n));
            }
            let ks = self.k_values(m);
            if ks.is_empty() {
                return fail(format!("empty K sweep for M = {m}"));
            }
            for k in ks {
                if k == 0 || k % m != 0 {
                    return fail(format!("K = {k} is not a positive multiple of M = {m}"));
                }
                if k > self.n {
                    return fail(format!("K = {k} exceeds n = {}", self.n));
                }
            }
        }
        Ok(())
    }
}

/// Parameters for the random-permutation balancing experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancingConfig {
    pub n: usize,
    pub segments: usize,
    pub sparsity: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BalancingConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            segments: 10,
            sparsity: 60,
            trials: 100_000,
            seed: 2016,
        }
    }
}

/// Reads a config file: JSON when the extension is `.json`, TOML otherwise.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
