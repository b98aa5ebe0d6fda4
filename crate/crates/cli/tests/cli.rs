use std::process::{Command, Output};

use serde_json::Value;

fn mlpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlpa"))
        .args(args)
        .env_remove("MLPA_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn tune_reproduces_ou_plan() {
    let out = mlpa(&[
        "tune", "--model", "ou", "--d", "10", "--eps", "0.1", "--regime", "b2",
    ]);
    // The warm start exceeds T_R / 2 at this accuracy, so the plan is flagged infeasible.
    assert_eq!(out.status.code(), Some(2));
    let plan = json(&out);
    assert_eq!(plan["R"], 5);
    assert_eq!(plan["horizons"][0].as_f64().unwrap(), 1000.0);
    assert_eq!(plan["predicted_complexity"], 7960);
    assert_eq!(plan["feasible"], false);
}

#[test]
fn tune_feasible_plan_exits_zero() {
    let out = mlpa(&["tune", "--d", "10", "--eps", "0.001"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["feasible"], true);
}

#[test]
fn tune_rejects_bad_eps() {
    assert_eq!(mlpa(&["tune", "--eps", "1.5"]).status.code(), Some(1));
    assert_eq!(mlpa(&["tune", "--eps", "abc"]).status.code(), Some(1));
    assert_eq!(mlpa(&["tune", "--bogus"]).status.code(), Some(1));
}

#[test]
fn tune_aggressive_echoes_enlarged_step() {
    let out = mlpa(&[
        "tune",
        "--model",
        "logistic",
        "--lambda",
        "0.25",
        "--a",
        "2",
        "--d",
        "100",
        "--regime",
        "aggressive",
    ]);
    let plan = json(&out);
    let g0 = plan["gamma"][0].as_f64().unwrap();
    assert!((g0 - 20.25).abs() < 1e-9, "{g0}");
    assert_eq!(plan["experimental"], true);
}

#[test]
fn run_table_has_one_row_per_level() {
    let out = mlpa(&[
        "run", "--model", "ou", "--d", "10", "--eps", "0.1", "--table", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).take(6).collect();
    assert_eq!(rows.len(), 6);
    let last: f64 = rows[5].split_whitespace().last().unwrap().parse().unwrap();
    assert!((2.9..3.3).contains(&last), "{last}");
}

#[test]
fn run_is_deterministic_across_invocations_and_threads() {
    let args = [
        "run", "--model", "ou", "--d", "6", "--eps", "0.2", "--seed", "42",
    ];
    let a = mlpa(&args);
    let b = mlpa(&args);
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "4"]);
    let c = mlpa(&with_threads);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let env_threads = Command::new(env!("CARGO_BIN_EXE_mlpa"))
        .args(args)
        .env("MLPA_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(a.stdout, env_threads.stdout);
}

#[test]
fn run_identity_on_logistic_gives_vector() {
    let out = mlpa(&[
        "run",
        "--model",
        "logistic",
        "--d",
        "5",
        "--eps",
        "0.3",
        "--observable",
        "identity",
        "--warm-start",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["estimate"].as_array().unwrap().len(), 5);
}

#[test]
fn run_csv_and_strict() {
    let out = mlpa(&["run", "--d", "4", "--eps", "0.3", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("level,gamma,T,contribution,iterations"));
    assert_eq!(
        mlpa(&["run", "--d", "10", "--eps", "0.1", "--strict"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn run_reads_starting_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x0.txt");
    std::fs::write(&path, "1 2 3").unwrap();
    let out = mlpa(&[
        "run",
        "--d",
        "3",
        "--eps",
        "0.3",
        "--x-init",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = mlpa(&[
        "run",
        "--d",
        "4",
        "--eps",
        "0.3",
        "--x-init",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"model": "ou", "d": 4, "eps": 0.01, "regime": "b1"}"#,
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let plan = json(&mlpa(&["tune", "--config", cfg]));
    assert_eq!(plan["dim"], 4);
    assert_eq!(plan["regime"], "b1");
    let plan = json(&mlpa(&[
        "tune", "--config", cfg, "--d", "6", "--regime", "b2",
    ]));
    assert_eq!(plan["dim"], 6);
    assert_eq!(plan["regime"], "b2");
    std::fs::write(&path, r#"{"dimension": 4}"#).unwrap();
    assert_eq!(mlpa(&["tune", "--config", cfg]).status.code(), Some(1));
}

#[test]
fn bench_ou_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = mlpa(&[
        "bench",
        "--suite",
        "ou",
        "--d",
        "10",
        "--eps",
        "0.1",
        "--runs",
        "50",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let rmse = report["rmse"].as_f64().unwrap();
    assert!((0.005..=0.08).contains(&rmse), "{rmse}");
    let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
    assert!(csv.starts_with("run,estimate,complexity,seconds"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn bench_logistic_with_quadrature_reference() {
    let out = mlpa(&[
        "bench",
        "--suite",
        "logistic",
        "--d",
        "10",
        "--eps",
        "0.2",
        "--runs",
        "2",
        "--reference",
        "quadrature",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["reference_value"].as_array().unwrap().len(), 10);
    assert!(report["rmse"].as_f64().unwrap() < 0.2);
}

#[test]
fn bench_rejects_zero_runs() {
    assert_eq!(
        mlpa(&["bench", "--suite", "ou", "--d", "10", "--runs", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn probes() {
    let out = mlpa(&[
        "probe",
        "--probe",
        "confluence",
        "--d",
        "2",
        "--paths",
        "400",
        "--horizon",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let order = json(&out)["order_estimate"].as_f64().unwrap();
    assert!((1.0..3.0).contains(&order), "{order}");

    let out = mlpa(&[
        "probe",
        "--probe",
        "contraction",
        "--d",
        "3",
        "--gamma",
        "0.5",
        "--steps",
        "10",
    ]);
    let v = json(&out);
    let dist = v["distances"].as_array().unwrap();
    for (n, d) in dist.iter().enumerate() {
        let exact = 0.5f64.powi(n as i32);
        assert!((d.as_f64().unwrap() - exact).abs() <= 1e-10 * exact);
    }

    let v = json(&mlpa(&[
        "probe",
        "--probe",
        "invariant-moment",
        "--gamma",
        "1",
    ]));
    assert_eq!(v["oracle"].as_f64().unwrap(), 2.0);
    assert_eq!(
        mlpa(&["probe", "--probe", "invariant-moment", "--gamma", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mlpa(&["probe", "--probe", "unknown"]).status.code(),
        Some(1)
    );
}
