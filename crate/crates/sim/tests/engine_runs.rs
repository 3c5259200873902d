// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use lightchain_core::view::{replay, view_digest, ViewTable};
use lightchain_sim::config::Strategy;
use lightchain_sim::export::{aggregate_csv, series_csv, summary_text, AGGREGATE_HEADER};
use lightchain_sim::{run, run_sweep, Engine, SimConfig, SimError};

fn small(seed: u64) -> SimConfig {
    SimConfig {
        n: 64,
        sim_hours: 2.0,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn honest_network_makes_progress_without_violations() {
    let m = run(&small(3)).unwrap();
    assert_eq!(m.integrity_violations, 0);
    assert!(m.chain_height >= 1, "height {}", m.chain_height);
    assert!(m.txs_committed > 0);
    assert!(m.tails_agree);
    assert_eq!(m.view_mismatches, 0);
    assert_eq!(m.series.len() as u64, m.slots);
    assert_eq!(m.slots, 12);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let a = run(&small(11)).unwrap();
    let b = run(&small(11)).unwrap();
    assert_eq!(a, b);
    assert_eq!(series_csv(&a), series_csv(&b));
    let c = run(&small(12)).unwrap();
    assert_ne!(series_csv(&a), series_csv(&c));
}

#[test]
fn replayed_store_matches_engine_view() {
    let cfg = small(5);
    let mut e = Engine::new(&cfg).unwrap();
    e.run_all().unwrap();
    let peers: Vec<_> = e.view().entries().map(|en| en.num_id).collect();
    let genesis = ViewTable::genesis(peers, cfg.endowment, e.store().genesis());
    let tail = e.store().tail();
    let replayed = replay(e.store(), &genesis, &tail, &cfg.params).unwrap();
    assert_eq!(view_digest(&replayed), view_digest(e.view()));
    assert_eq!(&replayed, e.view());
}

#[test]
fn zero_hours_yields_empty_series() {
    let cfg = SimConfig {
        sim_hours: 0.0,
        ..small(1)
    };
    let m = run(&cfg).unwrap();
    assert!(m.series.is_empty());
    assert_eq!(series_csv(&m).lines().count(), 1);
    assert!(summary_text(&cfg, &m).contains("chain_height=0\n"));
}

#[test]
fn sweep_rejects_unknown_axis_before_running() {
    let err = run_sweep(&small(1), "colour", &[1.0], &[1]).unwrap_err();
    assert!(matches!(err, SimError::Config(_)), "{err}");
    let err = run_sweep(&small(1), "f", &[0.2, 1.5], &[1]).unwrap_err();
    assert!(matches!(err, SimError::Config(_)), "{err}");
    assert!(run_sweep(&small(1), "t", &[], &[1, 2]).unwrap().is_empty());
}

#[test]
fn sweep_orders_cells_and_aggregates() {
    let base = SimConfig {
        n: 32,
        sim_hours: 1.0,
        ..SimConfig::default()
    };
    let cells = run_sweep(&base, "t", &[1.0, 2.0], &[4, 5]).unwrap();
    let keys: Vec<(f64, u64)> = cells.iter().map(|c| (c.axis_value, c.seed)).collect();
    assert_eq!(keys, vec![(1.0, 4), (1.0, 5), (2.0, 4), (2.0, 5)]);
    let csv = aggregate_csv(&cells);
    assert!(csv.starts_with(AGGREGATE_HEADER));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn weak_threshold_lets_adversary_commit_violations() {
    let mut cfg = SimConfig {
        n: 128,
        f: 0.33,
        sim_hours: 4.0,
        q_override: Some(0.0),
        auditing: false,
        seed: 2,
        ..SimConfig::default()
    };
    cfg.params.t = 1;
    cfg.params.alpha = 4;
    cfg.params.min_tx = 2;
    cfg.strategies = [Strategy::ForgeBlockCommit, Strategy::SignInvalid]
        .into_iter()
        .collect();
    let m = run(&cfg).unwrap();
    assert!(m.adversary_attempts > 0);
    assert!(m.integrity_violations > 0, "{m:?}");
}

#[test]
fn churn_takes_peers_offline_and_back() {
    let cfg = SimConfig {
        n: 64,
        sim_hours: 12.0,
        q_override: Some(0.3),
        seed: 9,
        ..SimConfig::default()
    };
    let m = run(&cfg).unwrap();
    let online: Vec<usize> = m.series.iter().map(|s| s.online_peers).collect();
    assert!(online.iter().all(|o| *o < 64));
    assert!(m.bootstraps > 0);
    assert_eq!(m.view_mismatches, 0);
    let mean = online.iter().sum::<usize>() as f64 / online.len() as f64;
    assert!((mean / 64.0 - 0.7).abs() < 0.15, "{mean}");
}
