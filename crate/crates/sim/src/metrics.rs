// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use lightchain_core::skipgraph::Phase;

/// Per-slot sample; counters are cumulative.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSample {
    pub slot: u64,
    pub online_peers: usize,
    pub chain_height: u64,
    /// Mean online replicas over the main-path blocks; 0 with no blocks.
    pub mean_replicas: f64,
    pub integrity_violations: u64,
    pub service_denials: u64,
    pub messages: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub slots: u64,
    /// Finalized main-path artifacts that fail omniscient re-validation.
    pub integrity_violations: u64,
    /// Honest attempts that failed for lack of `t` responses.
    pub service_denials: u64,
    pub service_attempts: u64,
    /// Online replicas summed over every (main-path block, slot) pair.
    pub replica_sum: u64,
    /// Number of (main-path block, slot) pairs.
    pub replica_observations: u64,
    pub series: Vec<SlotSample>,
    pub search_hops: BTreeMap<usize, u64>,
    /// Designated-validator count per peer, in peer-id order.
    pub involvement: Vec<u64>,
    pub messages: Vec<(Phase, u64)>,
    pub chain_height: u64,
    pub blocks_submitted: u64,
    pub fork_slots: u64,
    pub txs_committed: u64,
    pub adversary_attempts: u64,
    pub bootstraps: u64,
    pub bootstrap_failures: u64,
    /// Adopted views that differ from a genesis replay of their tail.
    pub view_mismatches: u64,
    pub reports_committed: u64,
    pub blacklisted: u64,
    /// Store, fork rule and shared view agree on the tail at the end.
    pub tails_agree: bool,
}

impl Metrics {
    /// Pooled mean of online replicas per block per slot.
    pub fn mean_replicas(&self) -> f64 {
        if self.replica_observations == 0 {
            0.0
        } else {
            self.replica_sum as f64 / self.replica_observations as f64
        }
    }

    pub fn service_denial_rate(&self) -> f64 {
        if self.service_attempts == 0 {
            0.0
        } else {
            self.service_denials as f64 / self.service_attempts as f64
        }
    }

    pub fn mean_hops(&self) -> f64 {
        let n: u64 = self.search_hops.values().sum();
        if n == 0 {
            return 0.0;
        }
        let s: u64 = self.search_hops.iter().map(|(h, c)| *h as u64 * c).sum();
        s as f64 / n as f64
    }

    pub fn involvement_mean(&self) -> f64 {
        if self.involvement.is_empty() {
            return 0.0;
        }
        self.involvement.iter().sum::<u64>() as f64 / self.involvement.len() as f64
    }

    /// Population standard deviation of per-peer involvement.
    pub fn involvement_stddev(&self) -> f64 {
        if self.involvement.is_empty() {
            return 0.0;
        }
        let m = self.involvement_mean();
        let var = self
            .involvement
            .iter()
            .map(|c| (*c as f64 - m).powi(2))
            .sum::<f64>()
            / self.involvement.len() as f64;
        var.sqrt()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages.iter().map(|(_, c)| c).sum()
    }
}
