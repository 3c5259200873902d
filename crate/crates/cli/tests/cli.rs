// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn lightchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lightchain"))
        .args(args)
        .env_remove("LIGHTCHAIN_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

const SERIES_HEADER: &str =
    "slot,online_peers,chain_height,mean_replicas,integrity_violations,service_denials,messages";

#[test]
fn params_infeasible_above_one_half() {
    let o = lightchain(&["params", "--f", "0.51", "--q", "0.2", "--epsilon", "2e-6"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("feasible=false"));
    assert!(stdout(&o).contains("chosen_alpha=none"));
}

#[test]
fn params_trivial_setting() {
    let o = lightchain(&["params", "--f", "0", "--q", "0"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(
        out.contains("chosen_alpha=1\n") && out.contains("chosen_t=1\n"),
        "{out}"
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lightchain(&["params", "--f", "1.2"])), 1);
    assert_eq!(code(&lightchain(&["params", "--f", "abc"])), 1);
    assert_eq!(code(&lightchain(&["frobnicate"])), 1);
    assert_eq!(code(&lightchain(&["--help"])), 0);
}

#[test]
fn run_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut series = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = lightchain(&[
            "run",
            "--seed",
            "42",
            "--peers",
            "128",
            "--hours",
            "6",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(read(&out.join("manifest.txt")).contains("seeds=42\n"));
        series.push((
            read(&out.join("series.csv")),
            read(&out.join("summary.txt")),
        ));
    }
    assert_eq!(series[0], series[1]);
    assert!(series[0].0.starts_with(SERIES_HEADER));
    assert_eq!(series[0].0.lines().count(), 37);
}

#[test]
fn zero_hours_gives_header_only_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    let o = lightchain(&[
        "run",
        "--hours",
        "0",
        "--peers",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(&out.join("series.csv")), format!("{SERIES_HEADER}\n"));
}

#[test]
fn unwritable_output_exits_three() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let out = file.path().join("sub");
    let o = lightchain(&[
        "run",
        "--hours",
        "0",
        "--peers",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn invalid_config_exits_one_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = lightchain(&["run", "--f", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "peers=16\nnot_a_key=3\n").unwrap();
    let o = lightchain(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn config_file_env_seed_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small\npeers=24\nhours=1\nalpha=3\nt=2\n").unwrap();
    let out = dir.path().join("o");
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_lightchain"));
        c.args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .args(extra);
        match env {
            Some(v) => c.env("LIGHTCHAIN_SEED", v),
            None => c.env_remove("LIGHTCHAIN_SEED"),
        };
        let o = c.output().unwrap();
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        read(&out.join("manifest.txt"))
    };
    let m = run(&[], Some("77"));
    assert!(
        m.contains("seeds=77\n") && m.contains("peers=24\n") && m.contains("alpha=3\n"),
        "{m}"
    );
    assert!(run(&["--seed", "5", "--peers", "20"], Some("77")).contains("seeds=5\n"));
    assert!(run(&[], None).contains("seeds=0\n"));
    assert_eq!(
        code(&lightchain(&["run", "--config", "/nonexistent/x.cfg"])),
        3
    );
}

#[test]
fn sweep_writes_cells_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let mut aggregates = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = lightchain(&[
            "sweep",
            "--axis",
            "t",
            "--values",
            "1,2,3,4",
            "--seeds",
            "1,2,3",
            "--peers",
            "32",
            "--alpha",
            "4",
            "--hours",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let series = std::fs::read_dir(&out)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with("series_")
            })
            .count();
        assert_eq!(series, 12);
        assert!(out.join("series_t=4_seed=3.csv").exists());
        let agg = read(&out.join("aggregate.csv"));
        assert_eq!(agg.lines().count(), 13);
        assert!(agg.starts_with("axis_value,seed,integrity_violations,service_denial_rate,mean_replicas,mean_hops,involvement_stddev\n"));
        aggregates.push(agg);
    }
    assert_eq!(aggregates[0], aggregates[1]);
}

#[test]
fn sweep_unknown_axis_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = lightchain(&[
        "sweep",
        "--axis",
        "colour",
        "--values",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}
