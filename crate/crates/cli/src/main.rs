//! `permcs`: experiment harness for block-diagonal compressive sampling with
//! permutation-balanced parallel decoding.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use permcs_core::experiments::demo::{demo_image, DemoConfig};
use permcs_core::experiments::verify::run_suite;
use permcs_core::experiments::{
    find_k_require, load_config, run_balancing_stats, run_mse_sweep, write_json_file, write_trials_csv_file,
    BalancingConfig, ExperimentConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "permcs", version, about = "Permutation-enhanced parallel compressive sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON (`.json`) or TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound on concurrent solves.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-MSE sweep over (M, K, mode); writes trials.csv and summary.json.
    Sweep(Common),
    /// Smallest K reaching the success rate per (M, mode); writes k_require.json.
    KRequire(Common),
    /// Per-segment sparsity under random permutations.
    PermStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        sparsity: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compressive imaging demo on a grayscale image.
    DemoImage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        measurements: Option<usize>,
        /// DCT coefficients kept in the ground truth.
        #[arg(long)]
        kept: Option<usize>,
        #[arg(long)]
        max_side: Option<usize>,
    },
    /// Runs the built-in invariant checks.
    Verify(Common),
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn experiment_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &common.out {
        cfg.output_path = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(explicit: Option<&Path>, fallback: &str) -> CliResult<PathBuf> {
    let dir = explicit.map_or_else(|| PathBuf::from(fallback), Path::to_path_buf);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sweep(common) => {
            let cfg = experiment_config(&common)?;
            let dir = out_dir(cfg.output_path.as_deref(), "results")?;
            let out = run_mse_sweep(&cfg)?;
            let csv = dir.join("trials.csv");
            let summary = dir.join("summary.json");
            write_trials_csv_file(&csv, &out.records)?;
            write_json_file(&summary, &out)?;
            print(&json!({ "trials_csv": csv, "summary": summary, "cells": out.cells.len() }));
        }
        Command::KRequire(common) => {
            let cfg = experiment_config(&common)?;
            let dir = out_dir(cfg.output_path.as_deref(), "results")?;
            let out = find_k_require(&cfg)?;
            let path = dir.join("k_require.json");
            write_json_file(&path, &out)?;
            let records: Vec<_> = out.entries.iter().flat_map(|e| e.records.iter().cloned()).collect();
            write_trials_csv_file(&dir.join("k_require_trials.csv"), &records)?;
            let table: Vec<_> = out
                .entries
                .iter()
                .map(|e| json!({ "M": e.m, "mode": e.mode, "outcome": e.outcome, "k_require": e.k_require, "timing": e.timing }))
                .collect();
            print(&json!({ "report": path, "entries": table }));
        }
        Command::PermStats { common, n, segments, sparsity, trials } => {
            let mut cfg: BalancingConfig = match &common.config {
                Some(path) => load_config(path)?,
                None => BalancingConfig::default(),
            };
            cfg.n = n.unwrap_or(cfg.n);
            cfg.segments = segments.unwrap_or(cfg.segments);
            cfg.sparsity = sparsity.unwrap_or(cfg.sparsity);
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let report = run_balancing_stats(&cfg)?;
            if let Some(out) = &common.out {
                let dir = out_dir(Some(out), "")?;
                write_json_file(&dir.join("balancing.json"), &report)?;
            }
            print(&serde_json::to_value(&report)?);
        }
        Command::DemoImage { common, image, segments, measurements, kept, max_side } => {
            let mut cfg: DemoConfig = match &common.config {
                Some(path) => load_config(path)?,
                None => DemoConfig::default(),
            };
            cfg.segments = segments.unwrap_or(cfg.segments);
            cfg.measurements = measurements.unwrap_or(cfg.measurements);
            cfg.kept = kept.unwrap_or(cfg.kept);
            cfg.max_side = max_side.unwrap_or(cfg.max_side);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.workers = common.workers.unwrap_or(cfg.workers);
            let dir = out_dir(common.out.as_deref(), "demo_out")?;
            let report = demo_image(&image, &cfg, &dir)?;
            print(&serde_json::to_value(&report)?);
        }
        Command::Verify(common) => {
            let report = run_suite(common.seed.unwrap_or(2016));
            if let Some(out) = &common.out {
                let dir = out_dir(Some(out), "")?;
                write_json_file(&dir.join("verify.json"), &report)?;
            }
            print(&serde_json::to_value(&report)?);
            if !report.passed {
                return Err("verify: one or more checks failed".into());
            }
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail("failed", &e.to_string(), 1),
    }
}
