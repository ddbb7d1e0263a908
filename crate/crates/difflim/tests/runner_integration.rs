//! CLI and report-level integration: exit codes, output formats, and
//! byte-identical reports across worker counts.

use std::fs;
use std::process::Command;

use difflim::runner::{run_experiment, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_difflim"))
}

#[test]
fn list_scenarios_prints_registry() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for want in ["besq", "zero_drift", "oscillatory_beta1", "periodic_k1", "delta_drift"] {
        assert!(text.contains(want), "missing {want}:\n{text}");
    }
}

#[test]
fn malformed_config_exits_2_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
scenario = "zero_drift"
t_ladder = [100.0]
horizon = 1.0
probe_times = [2.0]
"#,
    )
    .unwrap();
    let out = bin().arg("report").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("probe_times"), "stderr: {err}");
}

#[test]
fn unknown_scenario_exits_2_listing_known_ids() {
    let out = bin()
        .args(["check-conditions", "--scenario", "warp_drive", "--t-ladder", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("zero_drift"), "stderr: {err}");
}

#[test]
fn check_conditions_emits_checker_csv() {
    let out = bin()
        .args([
            "check-conditions",
            "--scenario",
            "besq(1)",
            "--t-ladder",
            "100,400",
            "--n-bound",
            "2.0",
            "--quad-tol",
            "1e-7",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "T,checker,N,value");
    assert!(text.contains("a3_q1"));
    assert!(text.contains("a3_q2"));
}

#[test]
fn simulate_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out_path = dir.path().join("summary.csv");
    let out = bin()
        .args([
            "simulate",
            "--scenario",
            "zero_drift",
            "--t-ladder",
            "100",
            "--paths",
            "200",
            "--seed",
            "9",
        ])
        .arg("--trace")
        .arg(&trace)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("t,xi,zeta,eta,beta1,beta2,beta_xi,i_t\n"));
    assert_eq!(trace_text.lines().count(), 1002, "1000 steps plus start plus header");
    let summary = fs::read_to_string(&out_path).unwrap();
    assert!(summary.starts_with("scenario,theorem,T,t,statistic,metric,value,stderr,verdict\n"));
    assert!(summary.contains("zeta"));
}

#[test]
fn report_bytes_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
scenario = "zero_drift"
t_ladder = [100.0, 1000.0]
n_paths = 500
seed = 33

[limit_sim]
h = 1e-3
n_paths = 500
"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let path = dir.path().join(format!("report_{threads}.csv"));
        let out = bin()
            .args(["report", "--config"])
            .arg(&cfg)
            .args(["--threads", threads, "--out"])
            .arg(&path)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "threads {threads}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "report bytes depend on worker count");
}

#[test]
fn seed_env_fallback_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
scenario = "zero_drift"
t_ladder = [100.0]
n_paths = 200

[limit_sim]
h = 1e-3
n_paths = 200
"#,
    )
    .unwrap();
    let run_with_env = |seed: &str| {
        let path = dir.path().join(format!("report_env_{seed}.csv"));
        let out = bin()
            .args(["report", "--config"])
            .arg(&cfg)
            .args(["--out"])
            .arg(&path)
            .env("DIFFLIM_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(&path).unwrap()
    };
    let a1 = run_with_env("7");
    let a2 = run_with_env("7");
    let b = run_with_env("8");
    assert_eq!(a1, a2);
    assert_ne!(a1, b);
}

#[test]
fn json_report_mirrors_csv_records() {
    let mut cfg = ExperimentConfig::new("zero_drift", vec![100.0]);
    cfg.n_paths = 300;
    cfg.limit_sim.h = 1e-3;
    cfg.limit_sim.n_paths = 300;
    cfg.seed = Some(4);
    let report = run_experiment(&cfg).unwrap();
    let mut json = Vec::new();
    report.to_json(&mut json).unwrap();
    let parsed: difflim::runner::Report = serde_json::from_slice(&json).unwrap();
    assert_eq!(parsed, report);
}

#[test]
fn in_process_reports_identical_across_pool_sizes() {
    let mut cfg = ExperimentConfig::new("besq(1)", vec![100.0]);
    cfg.n_paths = 400;
    cfg.limit_sim.h = 1e-3;
    cfg.limit_sim.n_paths = 400;
    cfg.seed = Some(12);
    let mut reports = Vec::new();
    for threads in [1usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run_experiment(&cfg)).unwrap();
        let mut buf = Vec::new();
        report.to_csv(&mut buf).unwrap();
        reports.push(buf);
    }
    assert_eq!(reports[0], reports[1]);
}
