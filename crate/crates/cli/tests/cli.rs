use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn raselab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raselab"))
        .args(args)
        .env_remove("RASELAB_THREADS")
        .output()
        .expect("spawn raselab")
}

fn ok(args: &[&str]) -> Output {
    let out = raselab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn listed_outputs(dir: &Path) -> BTreeSet<String> {
    json(&dir.join("run_manifest.json"))["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "run_manifest.json")
        .collect()
}

#[test]
fn capacity_reports_bandwidth_and_modes() {
    let out = ok(&["capacity"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["bandwidth_mhz"].as_f64().unwrap() - 95.42).abs() < 1e-9);
    assert_eq!(v["capacity"].as_u64(), Some(7528));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = raselab(&["capacity", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_validation_code() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    fs::write(&cfg, r#"{"gain_db": -3.0}"#).unwrap();
    let out = raselab(&["simulate", "--config", s(&cfg), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(&cfg, "{ not json").unwrap();
    let out = raselab(&["simulate", "--config", s(&cfg), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let missing = d.path().join("missing.json");
    let out = raselab(&["simulate", "--config", s(&missing), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_threads_rejected() {
    let d = tempfile::tempdir().unwrap();
    let out = raselab(&["--threads", "0", "capacity", "--out", s(d.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_analyze() {
    let d = tempfile::tempdir().unwrap();
    let shots = d.path().join("shots");
    ok(&["simulate", "--out", s(&shots), "--shots", "100", "--seed", "11"]);
    let files = files_in(&shots);
    assert_eq!(files, listed_outputs(&shots));
    assert!(!files.contains("INCOMPLETE"));
    let m = json(&shots.join("manifest.json"));
    let seeds: BTreeSet<u64> = m["shots"].as_array().unwrap().iter().map(|e| e["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds.len(), 100);

    let corr = d.path().join("corr");
    ok(&["analyze", "corr", "--shots", s(&shots), "--out", s(&corr), "--cutoff", "2000"]);
    assert_eq!(files_in(&corr), listed_outputs(&corr));
    let c = json(&corr.join("correlations.json"));
    assert_eq!(c["cross"]["n_shots"].as_u64(), Some(100));

    let insep = d.path().join("insep");
    ok(&[
        "analyze", "insep", "--shots", s(&shots), "--out", s(&insep), "--bootstrap", "50", "--eta", "0.17",
        "--transmission", "0.304", "--gain-db", "7",
    ]);
    let r = json(&insep.join("insep.json"));
    let l = r["lambda_min"].as_f64().unwrap();
    assert!(l > 1.0 && l < 2.5, "lambda_min {l}");
    assert_eq!(files_in(&insep), listed_outputs(&insep));
}

#[test]
fn analyze_rejects_missing_shot_set() {
    let d = tempfile::tempdir().unwrap();
    let out = raselab(&["analyze", "corr", "--shots", s(&d.path().join("nope")), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reproduce_is_deterministic_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    ok(&["--threads", "1", "reproduce", "fig9", "--out", s(&a), "--shots", "24"]);
    ok(&["--threads", "3", "reproduce", "fig9", "--out", s(&b), "--shots", "24"]);
    for f in ["multiplex.json", "multiplex_modes.csv", "run_manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(files_in(&a), listed_outputs(&a));
}

#[test]
fn seed_changes_results() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    ok(&["reproduce", "fig5", "--out", s(&a), "--seed", "1"]);
    ok(&["reproduce", "fig5", "--out", s(&b), "--seed", "2"]);
    assert_ne!(fs::read(a.join("storage_time.csv")).unwrap(), fs::read(b.join("storage_time.csv")).unwrap());
    assert_ne!(
        json(&a.join("run_manifest.json"))["base_seed"],
        json(&b.join("run_manifest.json"))["base_seed"]
    );
}

#[test]
fn file_outputs_get_a_sidecar_manifest() {
    let d = tempfile::tempdir().unwrap();
    let csv = d.path().join("eff.csv");
    ok(&["eff-curve", "--gains", "4,10,20", "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    let m = json(&d.path().join("eff.csv.manifest.json"));
    assert_eq!(m["outputs"][0].as_str(), Some("eff.csv"));
    assert!(!d.path().join("eff.csv.incomplete").exists());
}

#[test]
fn fit_decay_round_trip() {
    let d = tempfile::tempdir().unwrap();
    ok(&["reproduce", "fig5", "--out", s(d.path())]);
    // feed the synthetic storage scan back through fit-decay
    let scan = fs::read_to_string(d.path().join("storage_time.csv")).unwrap();
    let data: String = scan
        .lines()
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n");
    let input = d.path().join("scan.csv");
    fs::write(&input, data).unwrap();
    let fit = d.path().join("fit.json");
    ok(&["fit-decay", "--data", s(&input), "--clock", "storage", "--out", s(&fit)]);
    let t = json(&fit)["t_1e"].as_f64().unwrap();
    assert!((t - 25.1).abs() / 25.1 < 0.05, "t_1e {t}");
}
