//! End-to-end tests of the `mcips` binary: exit codes, file formats, config
//! precedence, and determinism.

use std::path::Path;
use std::process::{Command, Output};

use mcips_core::io;

fn mcips(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcips"))
        .args(args)
        .current_dir(dir)
        .env_remove("MCIPS_SEED")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_logs_replayable_trajectory_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = [
        "simulate",
        "--kind",
        "tasep",
        "--classes",
        "3",
        "--topology",
        "ring:32",
        "--t",
        "5",
        "--seed",
        "11",
        "--log",
        "events.jsonl",
    ];
    assert_eq!(mcips(dir, &args).status.code(), Some(0));
    let log = read(dir, "events.jsonl");
    let (traj, horizon) = io::parse_trajectory_jsonl(&log).expect("log replays");
    assert_eq!(horizon, 5.0);
    assert_eq!(traj.initial.classes(), 3);

    let manifest = io::parse_manifest(&read(dir, "events.jsonl.manifest")).unwrap();
    assert_eq!(manifest.get("seed").map(String::as_str), Some("11"));
    assert_eq!(manifest.get("command").map(String::as_str), Some("simulate"));

    // same seed, byte-identical; different seed, different bytes
    let rerun_args: Vec<&str> = args
        .iter()
        .map(|&a| if a == "events.jsonl" { "rerun.jsonl" } else { a })
        .collect();
    assert_eq!(mcips(dir, &rerun_args).status.code(), Some(0));
    assert_eq!(log, read(dir, "rerun.jsonl"));
    let other_args: Vec<&str> = rerun_args
        .iter()
        .map(|&a| match a {
            "11" => "12",
            "rerun.jsonl" => "other.jsonl",
            a => a,
        })
        .collect();
    assert_eq!(mcips(dir, &other_args).status.code(), Some(0));
    assert_ne!(log, read(dir, "other.jsonl"));
}

#[test]
fn construct_measure_emits_sidecar_and_validates_densities() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mcips(
        dir,
        &[
            "construct-measure",
            "--densities",
            "0.2,0.5,0.8",
            "--topology",
            "segment:50:100",
            "--seed",
            "3",
            "--out",
            "xi.mc",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = read(dir, "xi.mc");
    assert!(text.contains("# burn-in: 67"));
    assert!(text.contains("# boundary: empty"));
    assert!(text.contains("# densities: 0.2,0.5,0.8"));
    let xi = io::parse_multiclass(&text).expect("sidecar headers stay parseable");
    assert_eq!(xi.classes(), 3);

    let bad = mcips(
        dir,
        &[
            "construct-measure",
            "--densities",
            "0.5,0.2",
            "--topology",
            "ring:20",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("strictly increasing"));
}

#[test]
fn dual_points_roundtrip_and_cross_check() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (args, expect) in [
        (
            vec![
                "simulate", "--kind", "had", "--topology", "ring:24", "--t", "4", "--seed", "21",
                "--log", "ev.jsonl",
            ],
            Some(0),
        ),
        (
            vec![
                "dual-points", "--kind", "had", "--traj", "ev.jsonl", "--out", "duals.pts",
            ],
            Some(0),
        ),
    ] {
        assert_eq!(mcips(dir, &args).status.code(), expect);
    }
    let (traj, horizon) = io::parse_trajectory_jsonl(&read(dir, "ev.jsonl")).unwrap();
    let (duals, topology, h) = io::parse_dual_points(&read(dir, "duals.pts")).unwrap();
    assert_eq!(duals.len(), traj.events.len());
    assert_eq!(topology, traj.topology());
    assert_eq!(h, horizon);

    // an --in file matching the trajectory's marks passes the cross-check
    let marks: Vec<mcips_core::dynamics::Mark> = traj
        .events
        .iter()
        .map(|ev| mcips_core::dynamics::Mark {
            location: ev.location,
            time: ev.time,
            dir_left: None,
        })
        .collect();
    let points =
        mcips_core::dynamics::PointProcess::new(traj.topology(), horizon, marks).unwrap();
    std::fs::write(dir.join("omega.pts"), io::write_points(&points, traj.kind)).unwrap();
    let ok = mcips(
        dir,
        &[
            "dual-points", "--in", "omega.pts", "--traj", "ev.jsonl", "--out", "d2.pts",
        ],
    );
    assert_eq!(ok.status.code(), Some(0));

    // a foreign point file fails it with exit 1
    let foreign = mcips_core::dynamics::generate_poisson(
        traj.topology(),
        traj.kind,
        horizon,
        999,
    )
    .unwrap();
    std::fs::write(dir.join("wrong.pts"), io::write_points(&foreign, traj.kind)).unwrap();
    let bad = mcips(
        dir,
        &[
            "dual-points", "--in", "wrong.pts", "--traj", "ev.jsonl", "--out", "d3.pts",
        ],
    );
    assert_eq!(bad.status.code(), Some(1));

    // a kind contradicting the trajectory header is a usage error
    let mismatched = mcips(dir, &["dual-points", "--kind", "tasep", "--traj", "ev.jsonl"]);
    assert_eq!(mismatched.status.code(), Some(2));
}

#[test]
fn multiline_check_passes_and_writes_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mcips(
        dir,
        &[
            "multiline",
            "--kind",
            "tasep",
            "--densities",
            "0.2,0.5,0.8",
            "--topology",
            "ring:64",
            "--t",
            "10",
            "--seed",
            "5",
            "--check",
            "t-image",
            "--out",
            "lines.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] t-image"));
    let lines = io::parse_lines(&read(dir, "lines.txt")).unwrap();
    assert_eq!(lines.len(), 3);
    // fixed counts are conserved on the ring
    assert_eq!(
        lines.iter().map(|l| l.particle_count()).collect::<Vec<_>>(),
        vec![13, 32, 51]
    );
}

#[test]
fn burke_exit_reflects_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let base = ["burke", "--rho1", "0.25", "--rho2", "0.75"];
    assert_eq!(mcips(dir, &base).status.code(), Some(0));
    let mut strict = base.to_vec();
    strict.extend(["--tolerance", "1e-30"]);
    assert_eq!(mcips(dir, &strict).status.code(), Some(1));
}

#[test]
fn verify_burke_reports_honest_ratio_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mcips(dir, &["verify", "--suite", "burke", "--json", "report.json"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&read(dir, "report.json")).unwrap();
    let tests = report.as_array().unwrap();
    assert_eq!(tests.len(), 2);
    assert_eq!(tests[0]["name"], "burke-departures");
    assert_eq!(tests[0]["passed"], true);
    assert_eq!(tests[1]["name"], "queue-geometric-ratio");
    assert_eq!(tests[1]["passed"], false);
    // manifest lands next to the report
    let manifest = io::parse_manifest(&read(dir, "report.json.manifest")).unwrap();
    assert_eq!(manifest.get("passed").map(String::as_str), Some("false"));
}

#[test]
fn verify_pathwise_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mcips(
        dir,
        &[
            "verify", "--suite", "pathwise", "--kind", "had", "--replicas", "10", "--seed", "2",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_and_env_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("run.ini"),
        "# settings\n[simulate]\nseed = 42\nt = 3\n",
    )
    .unwrap();
    let seed_of = |name: &str| {
        io::parse_manifest(&read(dir, &format!("{name}.manifest")))
            .unwrap()
            .remove("seed")
            .unwrap()
    };

    // config fills what flags leave open
    let a = mcips(
        dir,
        &[
            "--config", "run.ini", "simulate", "--topology", "ring:16", "--log", "a.jsonl",
        ],
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(seed_of("a.jsonl"), "42");

    // a flag beats the config value
    let b = mcips(
        dir,
        &[
            "--config", "run.ini", "simulate", "--topology", "ring:16", "--seed", "99", "--log",
            "b.jsonl",
        ],
    );
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(seed_of("b.jsonl"), "99");

    // MCIPS_SEED fills in when neither flag nor config file gives a seed
    let c = Command::new(env!("CARGO_BIN_EXE_mcips"))
        .args(["simulate", "--topology", "ring:16", "--t", "3", "--log", "c.jsonl"])
        .current_dir(dir)
        .env("MCIPS_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(c.status.code(), Some(0));
    assert_eq!(seed_of("c.jsonl"), "77");

    // unknown config keys are named precisely
    std::fs::write(dir.join("bad.ini"), "[simulate]\nbogus = 1\n").unwrap();
    let bad = mcips(
        dir,
        &["--config", "bad.ini", "simulate", "--topology", "ring:16"],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("unknown key \"bogus\""));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // no arguments at all: usage text
    let empty = Command::new(env!("CARGO_BIN_EXE_mcips"))
        .current_dir(dir)
        .output()
        .unwrap();
    assert_eq!(empty.status.code(), Some(2));

    let cases: &[&[&str]] = &[
        &["verify", "--suite", "nonsense"],
        &["verify", "--suite", "invariance", "--densities", "0.5,0.2"],
        &["simulate", "--topology", "triangle:9"],
        &["simulate", "--topology", "ring:16", "--kind", "par-tasep", "--classes", "2"],
        &["oracle", "--topology", "segment:5:5"],
    ];
    for args in cases {
        let out = mcips(dir, args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {}", stderr(&out));
    }
}

#[test]
fn oracle_writes_stationary_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = mcips(
        dir,
        &[
            "oracle", "--kind", "tasep", "--topology", "ring:5", "--count", "2", "--out",
            "pi.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let table = read(dir, "pi.csv");
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("state,probability"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    let total: f64 = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}
