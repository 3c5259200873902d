// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration and its `key=value` text form.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use lightchain_core::pov::PovParams;
use lightchain_core::view::DEFAULT_ENDOWMENT;

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Corrupted block owners push blocks carrying unvalidated transactions
    /// through colluding validators.
    ForgeBlockCommit,
    /// Corrupted validators refuse to sign honest artifacts.
    WithholdSignatures,
    /// Corrupted validators sign colluders' artifacts without checking them.
    SignInvalid,
    /// Corrupted introducers serve a doctored view.
    ServeForgedView,
    /// Corrupted holders keep superseded transaction pointers.
    KeepStalePointers,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::ForgeBlockCommit,
        Strategy::WithholdSignatures,
        Strategy::SignInvalid,
        Strategy::ServeForgedView,
        Strategy::KeepStalePointers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ForgeBlockCommit => "forge_block_commit",
            Strategy::WithholdSignatures => "withhold_signatures",
            Strategy::SignInvalid => "sign_invalid",
            Strategy::ServeForgedView => "serve_forged_view",
            Strategy::KeepStalePointers => "keep_stale_pointers",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::Config(format!("unknown adversary strategy '{s}'")))
    }
}

/// Steady-state offline fraction of an alternating on/off process.
pub fn derive_q(mean_online: f64, mean_offline: f64) -> Result<f64> {
    if !mean_online.is_finite()
        || !mean_offline.is_finite()
        || mean_online <= 0.0
        || mean_offline < 0.0
    {
        return Err(SimError::Domain(format!(
            "holding-time means must be positive, got online {mean_online} and offline {mean_offline}"
        )));
    }
    Ok(mean_offline / (mean_online + mean_offline))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub f: f64,
    pub params: PovParams,
    pub mean_online_hours: f64,
    pub mean_offline_hours: f64,
    /// When set, replaces the offline mean so that the steady-state offline
    /// fraction equals this value.
    pub q_override: Option<f64>,
    pub tx_rate_per_peer_per_hour: f64,
    pub sim_hours: f64,
    pub slot_minutes: u32,
    pub seed: u64,
    pub width_s: u32,
    pub strategies: BTreeSet<Strategy>,
    /// Mean number of block formation attempts per slot.
    pub candidates_per_slot: f64,
    /// Honest peers audit finalized blocks and stale pointers.
    pub auditing: bool,
    pub endowment: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 512,
            f: 0.0,
            params: PovParams::default(),
            mean_online_hours: 10.6,
            mean_offline_hours: 2.8,
            q_override: None,
            tx_rate_per_peer_per_hour: 1.0,
            sim_hours: 48.0,
            slot_minutes: 10,
            seed: 0,
            width_s: 64,
            strategies: Strategy::ALL.into_iter().collect(),
            candidates_per_slot: 2.0,
            auditing: true,
            endowment: DEFAULT_ENDOWMENT,
        }
    }
}

/// Keys accepted by [`SimConfig::set`] whose value is a single number.
pub const NUMERIC_KEYS: [&str; 20] = [
    "peers",
    "f",
    "q",
    "alpha",
    "t",
    "min_tx",
    "validation_fee",
    "routing_fee",
    "block_reward",
    "misbehavior_penalty",
    "audition_reward",
    "block_interval",
    "mean_online_hours",
    "mean_offline_hours",
    "tx_rate_per_peer_per_hour",
    "hours",
    "slot_minutes",
    "width_s",
    "candidates_per_slot",
    "endowment",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| SimError::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(SimError::Config(format!(
            "invalid value '{value}' for {key}"
        ))),
    }
}

impl SimConfig {
    /// Steady-state offline fraction of honest peers.
    pub fn q(&self) -> Result<f64> {
        match self.q_override {
            Some(q) => Ok(q),
            None => derive_q(self.mean_online_hours, self.mean_offline_hours),
        }
    }

    /// Offline mean after applying `q_override`.
    pub fn effective_offline_hours(&self) -> f64 {
        match self.q_override {
            Some(q) => self.mean_online_hours * q / (1.0 - q),
            None => self.mean_offline_hours,
        }
    }

    pub fn slot_hours(&self) -> f64 {
        self.slot_minutes as f64 / 60.0
    }

    /// Number of whole slots in the run.
    pub fn slots(&self) -> u64 {
        if self.slot_minutes == 0 {
            return 0;
        }
        (self.sim_hours * 60.0 / self.slot_minutes as f64 + 1e-9).floor() as u64
    }

    pub fn corrupted_count(&self) -> usize {
        (self.f * self.n as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n < 2 {
            return bad(format!("peers must be at least 2, got {}", self.n));
        }
        if !(0.0..1.0).contains(&self.f) {
            return bad(format!("f must be in [0, 1), got {}", self.f));
        }
        if let Some(q) = self.q_override {
            if !(0.0..1.0).contains(&q) {
                return bad(format!("q must be in [0, 1), got {q}"));
            }
        }
        derive_q(self.mean_online_hours, self.mean_offline_hours)?;
        if !self.tx_rate_per_peer_per_hour.is_finite() || self.tx_rate_per_peer_per_hour < 0.0 {
            return bad(format!(
                "tx rate must be nonnegative, got {}",
                self.tx_rate_per_peer_per_hour
            ));
        }
        if !self.sim_hours.is_finite() || self.sim_hours < 0.0 {
            return bad(format!("hours must be nonnegative, got {}", self.sim_hours));
        }
        if self.slot_minutes == 0 {
            return bad("slot_minutes must be positive".into());
        }
        if !(1..=256).contains(&self.width_s) {
            return bad(format!("width_s must be in 1..=256, got {}", self.width_s));
        }
        if !self.candidates_per_slot.is_finite() || self.candidates_per_slot <= 0.0 {
            return bad(format!(
                "candidates_per_slot must be positive, got {}",
                self.candidates_per_slot
            ));
        }
        if self.endowment <= 0 {
            return bad("endowment must be positive".into());
        }
        if self.n - self.corrupted_count() == 0 {
            return bad("at least one peer must be honest".into());
        }
        // t > alpha is admitted: it is how sweeps reach the integrity bound.
        self.params
            .validate_relaxed(self.n)
            .map_err(|e| SimError::Config(e.to_string()))
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "peers" | "n" => self.n = parse(key, value)?,
            "f" => self.f = parse(key, value)?,
            "q" => self.q_override = Some(parse(key, value)?),
            "alpha" => p.alpha = parse(key, value)?,
            "t" => p.t = parse(key, value)?,
            "min_tx" => p.min_tx = parse(key, value)?,
            "validation_fee" => p.validation_fee = parse(key, value)?,
            "routing_fee" => p.routing_fee = parse(key, value)?,
            "block_reward" => p.block_reward = parse(key, value)?,
            "misbehavior_penalty" => p.misbehavior_penalty = parse(key, value)?,
            "audition_reward" => p.audition_reward = parse(key, value)?,
            "block_interval" => p.block_interval = parse(key, value)?,
            "mean_online_hours" => self.mean_online_hours = parse(key, value)?,
            "mean_offline_hours" => self.mean_offline_hours = parse(key, value)?,
            "tx_rate_per_peer_per_hour" => self.tx_rate_per_peer_per_hour = parse(key, value)?,
            "hours" | "sim_hours" => self.sim_hours = parse(key, value)?,
            "slot_minutes" => self.slot_minutes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "width_s" => self.width_s = parse(key, value)?,
            "candidates_per_slot" => self.candidates_per_slot = parse(key, value)?,
            "auditing" => self.auditing = parse_bool(key, value)?,
            "endowment" => self.endowment = parse(key, value)?,
            "strategies" => {
                let v = value.trim();
                self.strategies = match v {
                    "all" => Strategy::ALL.into_iter().collect(),
                    "none" | "" => BTreeSet::new(),
                    _ => v
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?,
                };
            }
            _ => {
                return Err(SimError::Config(format!(
                    "unknown configuration key '{key}'"
                )))
            }
        }
        Ok(())
    }

    /// Sets a numeric field from a sweep value.
    pub fn set_axis(&mut self, axis: &str, value: f64) -> Result<()> {
        if !NUMERIC_KEYS.contains(&axis) {
            return Err(SimError::Config(format!(
                "'{axis}' is not a sweepable parameter"
            )));
        }
        self.set(axis, &format!("{value}"))
    }

    /// Applies `key=value` lines over the current values. `#` starts a
    /// comment; blank lines are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected key=value, got '{raw}'", no + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| SimError::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = SimConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical text form; [`SimConfig::from_text`] reads it back.
    pub fn to_kv(&self) -> String {
        let p = &self.params;
        let strategies = if self.strategies.is_empty() {
            "none".to_string()
        } else {
            self.strategies
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("peers", self.n.to_string());
        kv("f", self.f.to_string());
        if let Some(q) = self.q_override {
            kv("q", q.to_string());
        }
        kv("alpha", p.alpha.to_string());
        kv("t", p.t.to_string());
        kv("min_tx", p.min_tx.to_string());
        kv("validation_fee", p.validation_fee.to_string());
        kv("routing_fee", p.routing_fee.to_string());
        kv("block_reward", p.block_reward.to_string());
        kv("misbehavior_penalty", p.misbehavior_penalty.to_string());
        kv("audition_reward", p.audition_reward.to_string());
        kv("block_interval", p.block_interval.to_string());
        kv("mean_online_hours", self.mean_online_hours.to_string());
        kv("mean_offline_hours", self.mean_offline_hours.to_string());
        kv(
            "tx_rate_per_peer_per_hour",
            self.tx_rate_per_peer_per_hour.to_string(),
        );
        kv("hours", self.sim_hours.to_string());
        kv("slot_minutes", self.slot_minutes.to_string());
        kv("seed", self.seed.to_string());
        kv("width_s", self.width_s.to_string());
        kv("strategies", strategies);
        kv("candidates_per_slot", self.candidates_per_slot.to_string());
        kv("auditing", self.auditing.to_string());
        kv("endowment", self.endowment.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_from_trace_means() {
        assert!((derive_q(10.6, 2.8).unwrap() - 0.20896).abs() < 1e-5);
        assert_eq!(derive_q(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(derive_q(3.0, 0.0).unwrap(), 0.0);
        assert!(derive_q(0.0, 1.0).is_err());
        assert!(derive_q(1.0, -1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = SimConfig::default();
        c.apply_text("# scenario\npeers = 64\nf=0.16 # adversary\n\nstrategies=sign_invalid,forge_block_commit\nq=0.25\n")
            .unwrap();
        assert_eq!(c.n, 64);
        assert_eq!(c.strategies.len(), 2);
        assert!((c.q().unwrap() - 0.25).abs() < 1e-12);
        assert!(
            (derive_q(c.mean_online_hours, c.effective_offline_hours()).unwrap() - 0.25).abs()
                < 1e-12
        );
        assert_eq!(SimConfig::from_text(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SimConfig::from_text("bogus=1").is_err());
        assert!(SimConfig::from_text("peers").is_err());
        assert!(SimConfig::from_text("peers=abc").is_err());
        assert!(SimConfig::from_text("strategies=nap").is_err());
        let mut c = SimConfig::default();
        assert!(c.set_axis("seed", 3.0).is_err());
        assert!(c.set_axis("t", 2.5).is_err());
        c.set_axis("t", 3.0).unwrap();
        assert_eq!(c.params.t, 3);
        c.f = 1.0;
        assert!(c.validate().is_err());
        let c = SimConfig {
            slot_minutes: 0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn slot_count() {
        let c = SimConfig::default();
        assert_eq!(c.slots(), 288);
        assert_eq!(
            SimConfig {
                sim_hours: 0.0,
                ..c.clone()
            }
            .slots(),
            0
        );
        assert_eq!(
            SimConfig {
                sim_hours: 0.25,
                ..c
            }
            .slots(),
            1
        );
    }
}
