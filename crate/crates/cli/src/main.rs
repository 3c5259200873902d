// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! `lightchain`: parameter solving, simulation runs and sweeps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! parameters, 3 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use lightchain_core::secparams::solve;
use lightchain_sim::export::{
    aggregate_csv, cell_series_name, create_dir, series_csv, summary_text, write_file, RunManifest,
};
use lightchain_sim::sweep::{run_sweep_with, sweep_configs};
use lightchain_sim::{run, SimConfig, SimError};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lightchain", version, about = "LightChain protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the smallest feasible (alpha, t).
    Params(ParamsArgs),
    /// Run one simulation and write its series and summary.
    Run(RunArgs),
    /// Run a parameter sweep over values and seeds.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ParamsArgs {
    /// Corrupted fraction.
    #[arg(long, default_value_t = 0.0)]
    f: f64,
    /// Offline probability.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Tolerated failure probability.
    #[arg(long, default_value_t = 2f64.powi(-10))]
    epsilon: f64,
    #[arg(long = "alpha-cap", default_value_t = 10_000)]
    alpha_cap: u64,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the config file, which overrides LIGHTCHAIN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    peers: Option<usize>,
    #[arg(long)]
    f: Option<f64>,
    /// Offline probability; overrides the trace-derived value.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long = "min-tx")]
    min_tx: Option<usize>,
    #[arg(long)]
    hours: Option<f64>,
    #[arg(long = "slot-minutes")]
    slot_minutes: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Parameter to sweep.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Comma-separated seeds; defaults to the single resolved seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Io { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn build_config(a: &SimArgs) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::default();
    if let Ok(s) = std::env::var("LIGHTCHAIN_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| {
            usage(format!(
                "LIGHTCHAIN_SEED must be an unsigned integer, got '{s}'"
            ))
        })?;
    }
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: EXIT_IO,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        cfg.apply_text(&text)?;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.peers {
        cfg.n = v;
    }
    if let Some(v) = a.f {
        cfg.f = v;
    }
    if let Some(v) = a.q {
        cfg.q_override = Some(v);
    }
    if let Some(v) = a.alpha {
        cfg.params.alpha = v;
    }
    if let Some(v) = a.t {
        cfg.params.t = v;
    }
    if let Some(v) = a.min_tx {
        cfg.params.min_tx = v;
    }
    if let Some(v) = a.hours {
        cfg.sim_hours = v;
    }
    if let Some(v) = a.slot_minutes {
        cfg.slot_minutes = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(
    command: &str,
    config: &SimConfig,
    axis: Option<(String, Vec<f64>)>,
    seeds: Vec<u64>,
    outputs: Vec<PathBuf>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config: config.clone(),
        axis,
        seeds,
        outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

fn write_manifest(out: &Path, m: &RunManifest) -> Result<(), Failure> {
    create_dir(out)?;
    write_file(&out.join("manifest.txt"), &m.to_text())?;
    Ok(())
}

fn cmd_params(a: &ParamsArgs) -> Result<u8, Failure> {
    let report = solve(a.f, a.q, a.epsilon, a.alpha_cap).map_err(|e| usage(e.to_string()))?;
    print!("{}", report.to_kv());
    Ok(if report.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_run(a: &RunArgs) -> Result<u8, Failure> {
    let cfg = build_config(&a.sim)?;
    let out = &a.sim.out;
    let series = out.join("series.csv");
    let summary = out.join("summary.txt");
    let m = manifest(
        "run",
        &cfg,
        None,
        vec![cfg.seed],
        vec![series.clone(), summary.clone()],
    );
    write_manifest(out, &m)?;
    let metrics = run(&cfg)?;
    write_file(&series, &series_csv(&metrics))?;
    write_file(&summary, &summary_text(&cfg, &metrics))?;
    println!("wrote {} and {}", series.display(), summary.display());
    Ok(0)
}

fn cmd_sweep(a: &SweepArgs) -> Result<u8, Failure> {
    let base = build_config(&a.sim)?;
    let seeds = if a.seeds.is_empty() {
        vec![base.seed]
    } else {
        a.seeds.clone()
    };
    // Reject the axis and every cell configuration before writing anything.
    sweep_configs(&base, &a.axis, &a.values, &seeds)?;
    let out = &a.sim.out;
    let mut outputs: Vec<PathBuf> = a
        .values
        .iter()
        .flat_map(|v| {
            seeds
                .iter()
                .map(move |s| out.join(cell_series_name(&a.axis, *v, *s)))
        })
        .collect();
    let aggregate = out.join("aggregate.csv");
    outputs.push(aggregate.clone());
    let m = manifest(
        "sweep",
        &base,
        Some((a.axis.clone(), a.values.clone())),
        seeds.clone(),
        outputs,
    );
    write_manifest(out, &m)?;
    let cells = run_sweep_with(&base, &a.axis, &a.values, &seeds, |cell| {
        write_file(
            &out.join(cell_series_name(&a.axis, cell.axis_value, cell.seed)),
            &series_csv(&cell.metrics),
        )
    })?;
    write_file(&aggregate, &aggregate_csv(&cells))?;
    println!(
        "wrote {} series files and {}",
        cells.len(),
        aggregate.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Params(a) => cmd_params(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
