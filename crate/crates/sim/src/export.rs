// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Text outputs: per-slot series, run summaries, sweep aggregates and the
//! run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::metrics::Metrics;
use crate::sweep::SweepCell;

pub const SERIES_HEADER: &str =
    "slot,online_peers,chain_height,mean_replicas,integrity_violations,service_denials,messages";
pub const AGGREGATE_HEADER: &str =
    "axis_value,seed,integrity_violations,service_denial_rate,mean_replicas,mean_hops,involvement_stddev";

pub fn series_csv(m: &Metrics) -> String {
    let mut out = String::with_capacity(64 * (m.series.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for s in &m.series {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{},{}",
            s.slot,
            s.online_peers,
            s.chain_height,
            s.mean_replicas,
            s.integrity_violations,
            s.service_denials,
            s.messages
        );
    }
    out
}

/// `key=value` summary of one run.
pub fn summary_text(cfg: &SimConfig, m: &Metrics) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("seed", cfg.seed.to_string());
    kv("slots", m.slots.to_string());
    kv("chain_height", m.chain_height.to_string());
    kv("integrity_violations", m.integrity_violations.to_string());
    kv("service_denials", m.service_denials.to_string());
    kv("service_attempts", m.service_attempts.to_string());
    kv(
        "service_denial_rate",
        format!("{:.6}", m.service_denial_rate()),
    );
    kv("mean_replicas", format!("{:.6}", m.mean_replicas()));
    kv("mean_hops", format!("{:.6}", m.mean_hops()));
    kv("involvement_mean", format!("{:.6}", m.involvement_mean()));
    kv(
        "involvement_stddev",
        format!("{:.6}", m.involvement_stddev()),
    );
    kv("blocks_submitted", m.blocks_submitted.to_string());
    kv("fork_slots", m.fork_slots.to_string());
    kv("txs_committed", m.txs_committed.to_string());
    kv("adversary_attempts", m.adversary_attempts.to_string());
    kv("bootstraps", m.bootstraps.to_string());
    kv("bootstrap_failures", m.bootstrap_failures.to_string());
    kv("view_mismatches", m.view_mismatches.to_string());
    kv("reports_committed", m.reports_committed.to_string());
    kv("blacklisted", m.blacklisted.to_string());
    kv("tails_agree", m.tails_agree.to_string());
    let hist: Vec<String> = m
        .search_hops
        .iter()
        .map(|(h, c)| format!("{h}:{c}"))
        .collect();
    kv("search_hops", hist.join(","));
    for (phase, c) in &m.messages {
        kv(&format!("messages.{}", phase.as_str()), c.to_string());
    }
    kv("messages_total", m.total_messages().to_string());
    out
}

pub fn aggregate_row(cell: &SweepCell) -> String {
    let m = &cell.metrics;
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{:.6}",
        cell.axis_value,
        cell.seed,
        m.integrity_violations,
        m.service_denial_rate(),
        m.mean_replicas(),
        m.mean_hops(),
        m.involvement_stddev()
    )
}

pub fn aggregate_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&aggregate_row(c));
        out.push('\n');
    }
    out
}

/// Everything needed to reproduce a run or sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: SimConfig,
    pub axis: Option<(String, Vec<f64>)>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# run manifest");
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "tool_version={}", self.tool_version);
        let _ = writeln!(out, "started_at={}", self.started_at);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds={}", seeds.join(","));
        if let Some((axis, values)) = &self.axis {
            let vals: Vec<String> = values.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "axis={axis}");
            let _ = writeln!(out, "values={}", vals.join(","));
        }
        for p in &self.outputs {
            let _ = writeln!(out, "output={}", p.display());
        }
        let _ = writeln!(out, "# config");
        out.push_str(&self.config.to_kv());
        out
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// File name of the series for one sweep cell.
pub fn cell_series_name(axis: &str, value: f64, seed: u64) -> String {
    format!("series_{axis}={value}_seed={seed}.csv")
}
