// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate. Prints one PASS/FAIL line per criterion; pass criterion
//! numbers as arguments to run a subset. Exits nonzero on any failure not
//! listed in `KNOWN_DEVIATIONS`.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use lightchain_core::ident::{hash_to_id, Identifier, KeyPair, SchemeKind, Width};
use lightchain_core::ledger::{blk_hash, make_genesis, tx_hash, Contribution};
use lightchain_core::pov::{blk_validator_id, tx_validator_id};
use lightchain_core::secparams::{min_alpha, min_t_integrity, normal_cdf, probit, solve};
use lightchain_core::skipgraph::{NodeKind, Overlay};
use lightchain_core::view::{view_digest, view_introducer_id, ViewTable};
use lightchain_sim::export::{series_csv, summary_text};
use lightchain_sim::scenarios::{fork_race, ForkSetup};
use lightchain_sim::stats::uniformity_test;
use lightchain_sim::{derive_q, run, Metrics, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Criteria expected to fail; see the README for the analysis.
const KNOWN_DEVIATIONS: &[u32] = &[6];

struct Gate {
    selected: BTreeSet<u32>,
    unexpected: Vec<u32>,
}

impl Gate {
    fn wants(&self, id: u32) -> bool {
        self.selected.is_empty() || self.selected.contains(&id)
    }

    fn report(&mut self, id: &str, pass: bool, detail: String) {
        let num: u32 = id
            .trim_end_matches(char::is_alphabetic)
            .parse()
            .unwrap_or(0);
        let known = !pass && KNOWN_DEVIATIONS.contains(&num);
        let tag = if pass { "PASS" } else { "FAIL" };
        let suffix = if known { " [known deviation]" } else { "" };
        println!("{tag} {id:<3} {detail}{suffix}");
        if !pass && !known {
            self.unexpected.push(num);
        }
    }
}

fn trace_q() -> f64 {
    derive_q(10.6, 2.8).unwrap()
}

fn criterion_1(g: &mut Gate) -> Vec<Metrics> {
    let q = trace_q();
    let mut all = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut t1_mean = 0.0;
    let started = Instant::now();
    for t in 1..=5usize {
        let (mut sum, mut obs) = (0u64, 0u64);
        for seed in 0..10 {
            let mut cfg = SimConfig {
                n: 512,
                sim_hours: 48.0,
                seed,
                ..SimConfig::default()
            };
            cfg.params.t = t;
            cfg.params.alpha = t + 1;
            let m = run(&cfg).unwrap();
            sum += m.replica_sum;
            obs += m.replica_observations;
            all.push(m);
        }
        let mean = sum as f64 / obs as f64;
        let expected = (t as f64 + 1.0) * (1.0 - q);
        let rel = mean / expected - 1.0;
        ok &= rel.abs() <= 0.05;
        if t == 1 {
            t1_mean = mean;
        }
        parts.push(format!(
            "t={t} {mean:.3}/{expected:.3} ({:+.1}%)",
            100.0 * rel
        ));
    }
    ok &= (1.52..=1.68).contains(&t1_mean);
    let per_seed = started.elapsed().as_secs_f64() / 10.0;
    g.report(
        "1",
        ok,
        format!(
            "replica availability, mean replicas vs (t+1)(1-q), q={q:.5}, +-5%, t=1 in [1.52,1.68]: {} [{per_seed:.1}s per seed]",
            parts.join(", ")
        ),
    );
    all
}

fn criterion_2(g: &mut Gate) {
    let eps = 2f64.powi(-10);
    let mut ok = true;
    let mut parts = Vec::new();
    for f in [0.16, 0.33, 0.51] {
        let alpha = min_alpha(f, eps).unwrap() as usize;
        let t_cor = min_t_integrity(alpha as u64, f, eps).unwrap() as usize;
        let mut fractions = Vec::new();
        for t in 1..=t_cor {
            let mut wins = 0;
            for seed in 0..50 {
                let mut cfg = SimConfig {
                    n: 128,
                    f,
                    sim_hours: 4.0,
                    q_override: Some(0.0),
                    auditing: false,
                    seed,
                    ..SimConfig::default()
                };
                cfg.params.alpha = alpha;
                cfg.params.t = t;
                cfg.params.min_tx = 5;
                if run(&cfg).unwrap().integrity_violations > 0 {
                    wins += 1;
                }
            }
            fractions.push(wins);
        }
        let monotone = fractions.windows(2).all(|w| w[1] <= w[0]);
        let zero_at_cor = *fractions.last().unwrap() == 0;
        ok &= monotone && zero_at_cor;
        let series: Vec<String> = fractions.iter().map(|w| format!("{w}")).collect();
        parts.push(format!(
            "f={f} alpha={alpha} t=1..{t_cor}: [{}]/50",
            series.join(",")
        ));
    }
    g.report(
        "2",
        ok,
        format!(
            "integrity decay, success nonincreasing in t and 0/50 at bound t: {}",
            parts.join("; ")
        ),
    );
}

fn criterion_3(g: &mut Gate) {
    let started = Instant::now();
    let mut bad = Vec::new();
    let mut checked = 0;
    for eps in [2f64.powi(-10), 2f64.powi(-20)] {
        for i in 1..=49 {
            let f = 0.5 + 0.01 * i as f64;
            for q in [0.001, 0.05, 0.1, 0.209, 0.3, 0.5, 0.9] {
                checked += 1;
                if solve(f, q, eps, 100_000).unwrap().feasible {
                    bad.push(format!("f={f} q={q} feasible"));
                }
            }
        }
    }
    for i in 0..=33 {
        let f = 0.01 * i as f64;
        checked += 1;
        if !solve(f, trace_q(), 2f64.powi(-10), 100_000)
            .unwrap()
            .feasible
        {
            bad.push(format!("f={f} infeasible"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    g.report(
        "3",
        bad.is_empty() && secs < 1.0,
        format!(
            "feasibility boundary, {checked} settings, {} mismatches {:?}, {secs:.3}s (< 1s)",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

fn criterion_4(g: &mut Gate) {
    let started = Instant::now();
    let width = Width::new(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut means = Vec::new();
    let mut ok = true;
    for n in [256usize, 1024, 4096] {
        let mut o = Overlay::new(width);
        let mut ids = Vec::with_capacity(n);
        while ids.len() < n {
            let kp = KeyPair::from_seed(SchemeKind::Mac, rng.random(), width);
            if !o.contains_peer(&kp.id()) {
                ids.push(o.join_peer(kp, true).unwrap());
            }
        }
        let mut total = 0usize;
        for _ in 0..1000 {
            let origin = ids[rng.random_range(0..n)];
            let target = Identifier::from_u64(rng.random(), width);
            total += o
                .search_num_id(&origin, &target, Some(NodeKind::Peer))
                .unwrap()
                .1
                .hop_count();
        }
        let mean = total as f64 / 1000.0;
        ok &= mean <= 2.0 * (n as f64).log2();
        means.push((n, mean));
    }
    let growth: Vec<f64> = means.windows(2).map(|w| (w[1].1 - w[0].1) / 2.0).collect();
    ok &= growth.iter().all(|d| *d <= 2.4);
    let secs = started.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    let desc: Vec<String> = means
        .iter()
        .map(|(n, m)| format!("n={n} {m:.2}<={:.0}", 2.0 * (*n as f64).log2()))
        .collect();
    let gdesc: Vec<String> = growth.iter().map(|d| format!("{d:.2}")).collect();
    g.report(
        "4",
        ok,
        format!(
            "search hops: {}, growth per doubling [{}] (<= 2.4), {secs:.1}s",
            desc.join(", "),
            gdesc.join(", ")
        ),
    );
}

fn criterion_5(g: &mut Gate) {
    let setup = ForkSetup::default();
    let mut failures = 0;
    let mut late = 0;
    let mut by_k = [0usize; 5];
    for seed in 0..1000 {
        let out = fork_race(&setup, seed).unwrap();
        if !out.passed() {
            failures += 1;
        }
        late += out.late_deliveries;
        by_k[out.branches] += 1;
    }
    g.report(
        "5",
        failures == 0,
        format!(
            "fork determinism, 1000 races (2/3/4 branches: {}/{}/{}), {} observers each, {late} late deliveries, {failures} disagreements",
            by_k[2], by_k[3], by_k[4], setup.observers
        ),
    );
}

fn criterion_6(g: &mut Gate) {
    let cfg = SimConfig {
        n: 512,
        sim_hours: 48.0,
        seed: 6,
        ..SimConfig::default()
    };
    let m = run(&cfg).unwrap();
    let t = uniformity_test(&m.involvement).unwrap();
    let dof = t.dof;
    let chi = ChiSquared::new(dof).unwrap();
    // Two-sided 99% band for the sample variance ratio under the binomial model.
    let lo = (chi.inverse_cdf(0.005) / dof).sqrt();
    let hi = (chi.inverse_cdf(0.995) / dof).sqrt();
    let ratio = t.rel_sd / t.expected_rel_sd;
    let pass = t.passes(0.01) && (lo..=hi).contains(&ratio);
    g.report(
        "6",
        pass,
        format!(
            "consensus fairness, chi2={:.1} dof={dof} p={:.3e} (>= 0.01), rel_sd={:.4} vs binomial {:.4}, ratio {ratio:.2} in [{lo:.2},{hi:.2}], mean involvement {:.1}",
            t.statistic, t.p_value, t.rel_sd, t.expected_rel_sd, t.mean
        ),
    );
}

/// Brute-force feasibility scan with direct evaluation of the four bounds.
fn scan_oracle(f: f64, q: f64, eps: f64, cap: u64) -> Option<(u64, u64)> {
    let z = -probit(eps).unwrap();
    let a_rhs = (f.sqrt() + (f * z * z + 4.0).sqrt()).powi(2) / (4.0 * (1.0 - f));
    for alpha in 1..=cap {
        let a = alpha as f64;
        if a < a_rhs - 1e-12 {
            continue;
        }
        for t in 1..=alpha {
            let tf = t as f64;
            let integrity = tf >= (a * f * (1.0 - f)).sqrt() * z + a * f + 1.0 - 1e-12;
            let replica = tf >= 1.0 / (1.0 - q) - 1.0 - 1e-12;
            let honest = (1.0 - f) * (1.0 - q);
            let service = tf <= a * honest / (f + honest) + 1e-12;
            if integrity && replica && service {
                return Some((alpha, t));
            }
        }
    }
    None
}

fn criterion_7(g: &mut Gate, churned: &[Metrics]) {
    // (a) Bootstrapped views against the replayed omniscient view.
    let mut runs: Vec<Metrics> = churned.to_vec();
    for seed in 0..4 {
        let mut cfg = SimConfig {
            n: 256,
            sim_hours: 24.0,
            seed: 700 + seed,
            ..SimConfig::default()
        };
        cfg.params.alpha = 3;
        cfg.params.t = 2;
        runs.push(run(&cfg).unwrap());
    }
    let boots: u64 = runs.iter().map(|m| m.bootstraps).sum();
    let fails: u64 = runs.iter().map(|m| m.bootstrap_failures).sum();
    let mism: u64 = runs.iter().map(|m| m.view_mismatches).sum();
    g.report(
        "7a",
        mism == 0 && boots > 0,
        format!(
            "bootstrap equals replay, {} runs, {boots} bootstraps ({fails} without quorum), {mism} mismatches",
            runs.len()
        ),
    );

    // (b) Solver against brute-force scan.
    let eps = 2f64.powi(-10);
    let mut mismatches = 0;
    for i in 0..20 {
        for j in 0..20 {
            let f = i as f64 * 0.05 * 0.99;
            let q = j as f64 * 0.045;
            let r = solve(f, q, eps, 300).unwrap();
            if r.chosen != scan_oracle(f, q, eps, 300) || r.feasible != r.chosen.is_some() {
                mismatches += 1;
            }
        }
    }
    g.report(
        "7b",
        mismatches == 0,
        format!("solver vs scan oracle, 20x20 grid, {mismatches} mismatches"),
    );

    // (c) Probit against bisection of the erf-based CDF.
    let (mut lo, mut hi) = (0.0f64, 5.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < 0.975 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = probit(0.975).unwrap();
    g.report(
        "7c",
        (p - 1.959964).abs() < 1e-4 && (p - lo).abs() < 1e-9,
        format!("probit(0.975)={p:.9}, erf inversion {lo:.9}, reference 1.959964 (1e-4)"),
    );

    // (d) Fixture hashes; expected values from a standalone SHA-256 tool.
    let w = Width::new(64).unwrap();
    let id = |v: u64| Identifier::from_u64(v, w);
    let cont = Contribution::remittance(id(2), 5);
    let t0 = tx_hash(&id(0), &id(1), &cont, &[]);
    let fixtures = [
        (
            "sha256(empty)",
            hash_to_id(b"", Width::new(256).unwrap()).to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        ("genesis", make_genesis(w).h.to_hex(), "54c2ed0f86ebd7f4"),
        ("tx", t0.to_hex(), "44f98586bf34ab36"),
        (
            "block",
            blk_hash(&id(0), &id(1), &[t0], &[]).to_hex(),
            "64d190e95a896ebf",
        ),
        (
            "tx validator 1",
            tx_validator_id(&id(0), &id(1), &cont, 1, 3)
                .unwrap()
                .to_hex(),
            "c37347b2bb9213ea",
        ),
        (
            "tx validator 2",
            tx_validator_id(&id(0), &id(1), &cont, 2, 3)
                .unwrap()
                .to_hex(),
            "e6d247623c420127",
        ),
        (
            "block validator",
            blk_validator_id(&id(0), &id(1), &[t0], 1, 2)
                .unwrap()
                .to_hex(),
            "782818186bcd5e44",
        ),
        (
            "view introducer",
            view_introducer_id(&id(1), 1).unwrap().to_hex(),
            "bf63bd89f0737921",
        ),
        (
            "empty view digest",
            view_digest(&ViewTable::empty(Identifier::zero(w))).to_hex(),
            "59b047bb41d97652",
        ),
    ];
    let wrong: Vec<&str> = fixtures
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(n, _, _)| *n)
        .collect();
    g.report(
        "7d",
        wrong.is_empty(),
        format!(
            "fixture hashes, {} checked, mismatched {wrong:?}",
            fixtures.len()
        ),
    );
}

fn criterion_8(g: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let mut honest = SimConfig {
        n: 256,
        sim_hours: 12.0,
        seed: 42,
        ..SimConfig::default()
    };
    honest.params.alpha = 4;
    honest.params.t = 3;
    let mut adversarial = SimConfig {
        n: 128,
        f: 0.33,
        sim_hours: 8.0,
        seed: 43,
        ..SimConfig::default()
    };
    adversarial.params.alpha = 4;
    adversarial.params.t = 2;
    adversarial.params.min_tx = 3;
    let mut identical = 0;
    let configs = [honest, adversarial];
    for (i, cfg) in configs.iter().enumerate() {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let m = run(cfg).unwrap();
            let series = dir.path().join(format!("series_{i}_{rep}.csv"));
            let summary = dir.path().join(format!("summary_{i}_{rep}.txt"));
            std::fs::write(&series, series_csv(&m)).unwrap();
            std::fs::write(&summary, summary_text(cfg, &m)).unwrap();
            bytes.push((
                std::fs::read(&series).unwrap(),
                std::fs::read(&summary).unwrap(),
            ));
        }
        if bytes[0] == bytes[1] {
            identical += 1;
        }
    }
    g.report(
        "8",
        identical == configs.len(),
        format!(
            "determinism, {identical}/{} configurations byte-identical across reruns",
            configs.len()
        ),
    );
}

fn main() -> ExitCode {
    let selected: BTreeSet<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut g = Gate {
        selected,
        unexpected: Vec::new(),
    };
    let started = Instant::now();
    let mut churned = Vec::new();
    if g.wants(1) {
        churned = criterion_1(&mut g);
    }
    if g.wants(2) {
        criterion_2(&mut g);
    }
    if g.wants(3) {
        criterion_3(&mut g);
    }
    if g.wants(4) {
        criterion_4(&mut g);
    }
    if g.wants(5) {
        criterion_5(&mut g);
    }
    if g.wants(6) {
        criterion_6(&mut g);
    }
    if g.wants(7) {
        criterion_7(&mut g, &churned);
    }
    if g.wants(8) {
        criterion_8(&mut g);
    }
    println!(
        "acceptance finished in {:.1}s",
        started.elapsed().as_secs_f64()
    );
    if g.unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {:?}", g.unexpected);
        ExitCode::FAILURE
    }
}
