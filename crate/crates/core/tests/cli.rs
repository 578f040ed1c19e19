use std::path::Path;
use std::process::{Command, Output};

fn antpupil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antpupil")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = antpupil(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn simulate(dir: &Path, seed: u64, baseline: bool) {
    let seed = seed.to_string();
    let mut args = vec!["simulate", "--seed", seed.as_str(), "--out", dir.to_str().unwrap()];
    if baseline {
        args.push("--baseline");
    }
    ok(&args);
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    simulate(&a, 42, false);
    simulate(&b, 42, false);
    for name in ["gaze.csv", "trials.csv", "truth.json"] {
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty(), "{name}");
        assert!(x == y, "{name} differs");
    }
    let c = root.path().join("c");
    simulate(&c, 43, false);
    assert!(std::fs::read(a.join("gaze.csv")).unwrap() != std::fs::read(c.join("gaze.csv")).unwrap());
}

#[test]
fn analyze_a_simulated_session() {
    let root = tempfile::tempdir().unwrap();
    let sim = root.path().join("sim");
    let out = root.path().join("out");
    simulate(&sim, 3, false);
    ok(&[
        "analyze",
        "--gaze",
        sim.join("gaze.csv").to_str().unwrap(),
        "--trials",
        sim.join("trials.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for name in ["report.json", "curves_congruency.csv", "curves_condition.csv", "spectrum.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let report = json(&out.join("report.json"));
    let mean = report["mean_rt_ms"].as_f64().unwrap();
    assert!((mean - 577.0).abs() < 15.0, "{mean}");
    assert!(report["timings"]["conflict_ms"].as_f64().unwrap() > 40.0);
}

#[test]
fn baseline_session_has_no_behavioural_results() {
    let root = tempfile::tempdir().unwrap();
    let sim = root.path().join("sim");
    let out = root.path().join("out");
    simulate(&sim, 4, true);
    ok(&[
        "analyze",
        "--gaze",
        sim.join("gaze.csv").to_str().unwrap(),
        "--trials",
        sim.join("trials.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["baseline"], serde_json::Value::Bool(true));
    assert!(report["mean_rt_ms"].is_null());
    assert!(report["error_rate"].is_null());
    assert!(report["timings"].is_null());
    assert!(report["auc"]["incongruent"].is_number());
}

#[test]
fn several_sessions_produce_a_rollup() {
    let root = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        simulate(&root.path().join(format!("s{seed}")), seed, false);
    }
    let out = root.path().join("out");
    let pattern = format!("{}/s*", root.path().display());
    ok(&["analyze", "--glob", &pattern, "--out", out.to_str().unwrap()]);
    for name in ["reports.json", "rollup.json", "correlation_r.csv", "correlation_p.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert_eq!(json(&out.join("reports.json")).as_array().unwrap().len(), 3);
}

#[test]
fn missing_input_is_a_data_error() {
    let root = tempfile::tempdir().unwrap();
    let out = antpupil(&[
        "analyze",
        "--gaze",
        "/nonexistent/gaze.csv",
        "--trials",
        "/nonexistent/trials.csv",
        "--out",
        root.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/gaze.csv"));
}

#[test]
fn truncated_gaze_log_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let sim = root.path().join("sim");
    simulate(&sim, 5, false);
    let gaze = sim.join("gaze.csv");
    let text = std::fs::read_to_string(&gaze).unwrap();
    let mut lines: Vec<&str> = text.lines().take(50).collect();
    let cut = lines[49].rsplitn(4, ',').last().unwrap().to_string();
    lines[49] = &cut;
    std::fs::write(&gaze, lines.join("\n")).unwrap();
    let out = antpupil(&[
        "analyze",
        "--gaze",
        gaze.to_str().unwrap(),
        "--trials",
        sim.join("trials.csv").to_str().unwrap(),
        "--out",
        root.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gaze.csv"));
}

#[test]
fn classify_without_sessions_fails() {
    let root = tempfile::tempdir().unwrap();
    let pattern = format!("{}/none*", root.path().display());
    let out = antpupil(&["classify", "--glob", &pattern, "--out", root.path().join("e.csv").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!root.path().join("e.csv").exists());
}

#[test]
fn invalid_arguments_exit_nonzero() {
    assert!(!antpupil(&["simulate"]).status.success());
    assert!(!antpupil(&["analyze", "--gaze", "x.csv", "--out", "o"]).status.success());
    assert!(!antpupil(&["classify", "--glob", "x", "--model", "forest", "--out", "e.csv"]).status.success());
}
