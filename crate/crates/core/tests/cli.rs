//! End-to-end tests of the `squeezetrack` binary: argument handling, exit
//! codes, file outputs, config-file precedence, and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_squeezetrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn usage_errors_exit_2() {
    let out = run(&["generate", "--out", "/tmp/x.csv"]); // missing --p
    assert_eq!(code(&out), 2);
    let out = run(&["nonsense"]);
    assert_eq!(code(&out), 2);
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn generate_is_seed_reproducible_and_writes_periodogram() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let pg = dir.path().join("pg.csv");
    let args = |out: &Path| {
        vec![
            "generate".to_string(),
            "--p".into(),
            "2".into(),
            "--samples".into(),
            "2048".into(),
            "--dt".into(),
            "0.01".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let out = bin().args(args(&a)).output().unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(args(&b))
        .args(["--periodogram", pg.to_str().unwrap(), "--periodogram-seeds", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let ta = fs::read(&a).unwrap();
    let tb = fs::read(&b).unwrap();
    assert_eq!(ta, tb, "same seed, byte-identical trajectory");
    assert!(ta.starts_with(b"t,phi\n"));
    assert_eq!(ta.split(|&c| c == b'\n').count(), 2048 + 2); // header + rows + trailing

    let pg_text = fs::read_to_string(&pg).unwrap();
    let mut lines = pg_text.lines();
    assert_eq!(lines.next(), Some("omega,power,expected"));
    assert_eq!(pg_text.lines().count(), 1 + 2048 / 2 + 1);
    // power and expectation are positive everywhere
    for line in pg_text.lines().skip(1) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[1] >= 0.0 && fields[2] > 0.0);
    }
}

#[test]
fn simulate_writes_summary_ensemble_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let ensemble = dir.path().join("ensemble.csv");
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "simulate",
        "--p",
        "2",
        "--flux",
        "1e3",
        "--runs",
        "3",
        "--total",
        "10",
        "--warmup",
        "2",
        "--unity-constants",
        "--summary",
        summary.to_str().unwrap(),
        "--ensemble",
        ensemble.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    for key in [
        "config",
        "mse",
        "holevo_mse",
        "stderr_mse",
        "effective_samples",
        "wall_time_s",
    ] {
        assert!(summary.get(key).is_some(), "summary key {key}");
    }
    assert!(summary["mse"].as_f64().unwrap() > 0.0);
    // filled from the scaling laws at unit prefactors
    let config = &summary["config"];
    assert!((config["chi_over_kappa"].as_f64().unwrap() - 100.0).abs() < 1e-8);
    assert!((config["r"].as_f64().unwrap() - 1e3f64.powf(1.0 / 6.0).ln()).abs() < 1e-9);

    let ens = fs::read_to_string(&ensemble).unwrap();
    assert!(ens.starts_with("run,seed,mse,holevo_mse,samples\n"));
    assert_eq!(ens.lines().count(), 1 + 3);

    let tr = fs::read_to_string(&trace).unwrap();
    assert!(tr.starts_with("t,phi,phi_est,theta\n"));
    assert!(tr.lines().count() > 10);
}

#[test]
fn simulate_is_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for (name, workers) in [("w1", "1"), ("w3", "3")] {
        let summary = dir.path().join(format!("{name}.json"));
        let ensemble = dir.path().join(format!("{name}.csv"));
        let out = run(&[
            "simulate",
            "--p",
            "2",
            "--flux",
            "1e3",
            "--runs",
            "4",
            "--total",
            "10",
            "--warmup",
            "2",
            "--seed",
            "5",
            "--unity-constants",
            "--workers",
            workers,
            "--summary",
            summary.to_str().unwrap(),
            "--ensemble",
            ensemble.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        results.push((
            fs::read_to_string(&summary).unwrap(),
            fs::read(&ensemble).unwrap(),
        ));
    }
    assert_eq!(results[0].1, results[1].1, "ensemble CSV identical across workers");
    let mut a: serde_json::Value = serde_json::from_str(&results[0].0).unwrap();
    let mut b: serde_json::Value = serde_json::from_str(&results[1].0).unwrap();
    a["wall_time_s"] = 0.into();
    b["wall_time_s"] = 0.into();
    assert_eq!(a, b, "summaries identical modulo wall time");
}

#[test]
fn workers_env_is_used_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let csv_env = dir.path().join("env.csv");
    let csv_flag = dir.path().join("flag.csv");
    let base = [
        "simulate",
        "--p",
        "2",
        "--flux",
        "1e3",
        "--runs",
        "3",
        "--total",
        "8",
        "--warmup",
        "2",
        "--unity-constants",
    ];
    let out = bin()
        .args(base)
        .args(["--ensemble", csv_env.to_str().unwrap()])
        .env("SQUEEZETRACK_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(base)
        .args(["--ensemble", csv_flag.to_str().unwrap(), "--workers", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(&csv_env).unwrap(), fs::read(&csv_flag).unwrap());

    let out = bin()
        .args(base)
        .env("SQUEEZETRACK_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("SQUEEZETRACK_WORKERS"));
}

#[test]
fn flux_budget_violation_names_condition_4() {
    let out = run(&[
        "simulate", "--p", "2", "--flux", "1e3", "--r", "5", "--gamma", "316", "--chi", "100",
        "--delta", "0.2", "--runs", "2",
    ]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Condition 4"), "stderr: {err}");
}

#[test]
fn config_file_strictness_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(
        &good,
        "# comment\n[spectrum]\np = 2.0\n\n[simulation]\nflux_over_kappa = 1e3\nruns = 2\ntotal_multiple = 8\nwarmup_multiple = 2\nbase_seed = 9\n",
    )
    .unwrap();

    // file alone works
    let out = bin()
        .args(["simulate", "--config", good.to_str().unwrap(), "--unity-constants"])
        .output()
        .unwrap();
    let v = stdout_json(&out);
    assert_eq!(v["config"]["base_seed"], 9);
    assert_eq!(v["config"]["runs"], 2);

    // flags override the file
    let out = bin()
        .args([
            "simulate",
            "--config",
            good.to_str().unwrap(),
            "--unity-constants",
            "--runs",
            "3",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    let v = stdout_json(&out);
    assert_eq!(v["config"]["base_seed"], 1);
    assert_eq!(v["config"]["runs"], 3);

    // unknown key is a hard error
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[simulation]\nflux_over_kappa = 1e3\nspeed = 11\n").unwrap();
    let out = bin()
        .args(["simulate", "--p", "2", "--config", bad.to_str().unwrap(), "--unity-constants"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulation.speed"));

    // unknown section likewise
    let bad2 = dir.path().join("bad2.cfg");
    fs::write(&bad2, "[tuning]\nx = 1\n").unwrap();
    let out = bin()
        .args(["simulate", "--p", "2", "--flux", "1e3", "--config", bad2.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[tuning]"));
}

fn tiny_optimize_args<'a>(trace: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "optimize",
        "--p",
        "2",
        "--flux",
        "1e2",
        "--unity-constants",
        "--search-runs",
        "2",
        "--confirm-runs",
        "2",
        "--total",
        "3",
        "--warmup",
        "1",
        "--seed",
        "3",
        "--trace",
        trace,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn optimize_single_point_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&tiny_optimize_args(trace.to_str().unwrap(), &["--max-cycles", "2"]));
    let report = stdout_json(&out);
    assert!(report["mse"].as_f64().unwrap() > 0.0);
    assert!(report["evaluations"].as_u64().unwrap() >= 1);
    assert!(report["best"]["er"].as_f64().unwrap() > 0.0);
    assert!(report.get("stop").is_some());

    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("cycle,chi,r,gamma,delta,mse,stderr,accepted\n"));
    let rows = text.lines().count() - 1;
    assert_eq!(rows as u64, report["evaluations"].as_u64().unwrap());
}

#[test]
fn optimize_resume_extends_the_trace_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    // short budget first
    let out = run(&tiny_optimize_args(trace.to_str().unwrap(), &["--max-cycles", "1"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read_to_string(&trace).unwrap();

    // resume with a larger budget; trace must grow, preserving the prefix
    let out = run(&[
        "optimize",
        "--p",
        "2",
        "--flux",
        "1e2",
        "--unity-constants",
        "--search-runs",
        "2",
        "--confirm-runs",
        "2",
        "--max-cycles",
        "3",
        "--total",
        "3",
        "--warmup",
        "1",
        "--seed",
        "3",
        "--resume",
        trace.to_str().unwrap(),
    ]);
    let report = stdout_json(&out);
    let second = fs::read_to_string(&trace).unwrap();
    assert!(second.starts_with(&first), "resume preserves the original rows");
    assert!(second.lines().count() > first.lines().count());
    assert_eq!(
        second.lines().count() - 1,
        report["evaluations"].as_u64().unwrap() as usize
    );
}

#[test]
fn optimize_sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let json = dir.path().join("sweep.json");
    let out = run(&[
        "optimize",
        "--p",
        "2",
        "--flux-grid",
        "1e2,1e3",
        "--unity-constants",
        "--search-runs",
        "2",
        "--confirm-runs",
        "2",
        "--max-cycles",
        "1",
        "--total",
        "3",
        "--warmup",
        "1",
        "--seed",
        "3",
        "--sweep-csv",
        csv.to_str().unwrap(),
        "--out",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["sweep"]["points"].as_array().unwrap().len(), 2);
    assert_eq!(report["sweep"]["p"], 2.0);
    // the spec echo makes the sweep reproducible from this file alone
    assert_eq!(report["spec"]["template"]["base_seed"], 3);

    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(
        "flux_over_kappa,chi,r,gamma,delta,mse,stderr,scaled_mse,status\n"
    ));
    assert!(text.lines().any(|l| l.starts_with("# fit,mse,")));
}

#[test]
fn optimize_freeze_keeps_coordinates_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&tiny_optimize_args(
        trace.to_str().unwrap(),
        &["--max-cycles", "2", "--freeze", "r,delta", "--r", "0", "--delta", "0"],
    ));
    let report = stdout_json(&out);
    assert_eq!(report["best"]["r"].as_f64().unwrap(), 0.0);
    assert_eq!(report["best"]["delta"].as_f64().unwrap(), 0.0);
    // frozen coordinates never move in the trace either
    let text = fs::read_to_string(&trace).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn scaling_reports_predictions_and_grid() {
    let out = run(&["scaling", "--p", "2", "--flux", "1e6"]);
    let v = stdout_json(&out);
    let pred = &v["prediction"];
    assert!((pred["er"].as_f64().unwrap() - 10.0).abs() < 1e-8);
    assert!((pred["chi_over_kappa"].as_f64().unwrap() - 1e4).abs() < 1e-6);
    assert!((pred["gamma_over_kappa"].as_f64().unwrap() - 1e5).abs() < 1e-5);
    assert!((pred["mse"].as_f64().unwrap() - 1e-4).abs() < 1e-12);
    assert!(v["conditions"]["all_pass"].as_bool().unwrap());
    assert!((v["heisenberg_constant"].as_f64().unwrap() - 0.03653132616530527).abs() < 1e-15);

    let out = run(&["scaling", "--p", "0.9"]);
    assert_eq!(code(&out), 3);

    let out = run(&["scaling", "--p-grid", "1.5,2,3"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,c_z,c_a"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn scaling_uses_shipped_or_custom_constants() {
    let out = run(&["scaling", "--p", "2", "--calibrated"]);
    let v = stdout_json(&out);
    let chi = v["constants"]["chi"].as_f64().unwrap();
    assert!(chi > 0.0 && chi != 1.0, "shipped table applies at p = 2");

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("constants.json");
    fs::write(
        &file,
        r#"{"version":1,"entries":[{"p":2.0,"er":2.0,"chi":3.0,"gamma":4.0,"delta":5.0,"mse":6.0}]}"#,
    )
    .unwrap();
    let out = run(&["scaling", "--p", "2", "--constants-file", file.to_str().unwrap()]);
    let v = stdout_json(&out);
    assert_eq!(v["constants"]["chi"].as_f64().unwrap(), 3.0);

    // missing entry for the requested exponent is an error
    let out = run(&["scaling", "--p", "2.5", "--constants-file", file.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no entry for p"));
}
