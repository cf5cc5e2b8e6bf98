use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rcx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcx"))
        .args(args)
        .current_dir(dir)
        .env_remove("RCX_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rcx(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) {
    ok(dir, &["gen-data", "--n", "30", "--base-nodes", "8", "--seed", "1", "--out", "data.json"]);
    ok(dir, &["train-target", "--data", "data.json", "--hidden", "8", "--epochs", "5", "--seed", "2", "--out", "model.json"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert_eq!(rcx(d, &["--help"]).status.code(), Some(0));
    assert_eq!(rcx(d, &["--version"]).status.code(), Some(0));
    assert_eq!(rcx(d, &["explain", "--data", "data.json", "--method", "random", "--out", "x.json"]).status.code(), Some(1));
    assert_eq!(rcx(d, &["gen-data", "--out", "x.json", "--bogus"]).status.code(), Some(1));
    assert_eq!(rcx(d, &["gen-data", "--n", "5", "--out", "x.json"]).status.code(), Some(1));
    let rc_without_policy = rcx(d, &["evaluate", "--data", "data.json", "--model", "model.json", "--out", "r.csv"]);
    assert_eq!(rc_without_policy.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&rc_without_policy.stderr).contains("--policy"));
    let missing = rcx(d, &["explain", "--data", "nope.json", "--model", "model.json", "--method", "random", "--out", "x.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));
}

#[test]
fn config_fills_missing_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("rcx.toml"), "seed = 9\n[gen-data]\nn = 45\nbase_nodes = 8\n").unwrap();
    ok(d, &["gen-data", "--config", "rcx.toml", "--out", "a.json"]);
    ok(d, &["gen-data", "--config", "rcx.toml", "--n", "33", "--out", "b.json"]);
    let manifest = |name: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join(name)).unwrap()).unwrap()
    };
    let a = manifest("a.json.manifest.json");
    assert_eq!(a["flags"]["n"], 45);
    assert_eq!(a["seeds"]["seed"], 9);
    assert_eq!(manifest("b.json.manifest.json")["flags"]["n"], 33);
}

#[test]
fn env_seed_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_rcx"))
        .args(["gen-data", "--n", "30", "--base-nodes", "8", "--out", "e.json"])
        .current_dir(d)
        .env("RCX_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("e.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seeds"]["seed"], 42);
}

#[test]
fn explanations_and_manifests_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["explain", "--data", "data.json", "--model", "model.json", "--method", "occlusion", "--k", "3", "--out", "ex.json"]);
    let ex: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ex.json")).unwrap()).unwrap();
    assert_eq!(ex["method"], "occlusion");
    assert_eq!(ex["split"], "test");
    let records = ex["explanations"].as_array().unwrap();
    assert!(!records.is_empty());
    for r in records {
        let order = r["order"].as_array().unwrap();
        let scores = r["scores"].as_array().unwrap();
        assert_eq!(order.len(), scores.len());
        assert_eq!(r["k"], 3);
        let s: Vec<f64> = scores.iter().map(|v| v.as_f64().unwrap()).collect();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ex.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "explain");
    assert_eq!(m["outputs"][0], "ex.json");
    assert_eq!(m["inputs"].as_object().unwrap().len(), 2);
    assert_eq!(m["inputs"]["data.json"].as_str().unwrap().len(), 64);
}

// Minimal checker for the subset of the DOT language the exporter emits.
fn check_dot(text: &str) {
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("graph \"") && lines[0].ends_with("\" {"), "{}", lines[0]);
    assert_eq!(*lines.last().unwrap(), "}");
    for line in &lines[1..lines.len() - 1] {
        let stmt = line.trim();
        assert!(stmt.ends_with("];"), "statement not terminated: {stmt}");
        let (head, attrs) = stmt.split_once(" [").unwrap();
        let head_ok = head == "graph"
            || head == "node"
            || head == "edge"
            || is_id(head)
            || head.split_once(" -- ").is_some_and(|(a, b)| is_id(a) && is_id(b));
        assert!(head_ok, "bad statement head: {head}");
        let body = &attrs[..attrs.len() - 2];
        let mut rest = body;
        while !rest.is_empty() {
            let (key, after) = rest.split_once('=').unwrap();
            assert!(is_id(key.trim_start_matches([',', ' '])), "bad key in {stmt}");
            rest = if let Some(quoted) = after.strip_prefix('"') {
                let end = quoted.find('"').unwrap_or_else(|| panic!("unterminated string in {stmt}"));
                &quoted[end + 1..]
            } else {
                let end = after.find([',', ' ']).unwrap_or(after.len());
                let value = &after[..end];
                assert!(is_id(value) || value.parse::<f64>().is_ok(), "bad value `{value}` in {stmt}");
                &after[end..]
            };
            rest = rest.trim_start_matches([',', ' ']);
        }
    }
}

fn is_id(s: &str) -> bool {
    !s.is_empty() && !s.starts_with(|c: char| c.is_ascii_digit()) && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[test]
fn export_dot_produces_valid_graph() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["explain", "--data", "data.json", "--model", "model.json", "--method", "greedy", "--out", "ex.json"]);
    let ex: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ex.json")).unwrap()).unwrap();
    let rec = &ex["explanations"][0];
    let id = rec["graph_id"].as_str().unwrap();
    ok(d, &["export-dot", "--data", "data.json", "--explanations", "ex.json", "--graph", id, "--out", "g.dot"]);
    let dot = fs::read_to_string(d.join("g.dot")).unwrap();
    check_dot(&dot);
    let edges = dot.lines().filter(|l| l.contains(" -- ")).count();
    assert_eq!(edges, rec["order"].as_array().unwrap().len());
    let missing = rcx(d, &["export-dot", "--data", "data.json", "--explanations", "ex.json", "--graph", "nope", "--out", "h.dot"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bench_reports_scaling_and_machine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["bench", "--data", "data.json", "--model", "model.json", "--methods", "random,greedy", "--out", "bench.csv"]);
    let csv = fs::read_to_string(d.join("bench.csv")).unwrap();
    let scaling: Vec<Vec<&str>> = csv
        .lines()
        .filter(|l| l.starts_with("scaling,"))
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(scaling.len(), 3);
    let forwards: Vec<f64> = scaling.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(forwards.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(csv.lines().filter(|l| l.starts_with("explainers,")).count(), 2);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("bench.csv.manifest.json")).unwrap()).unwrap();
    assert!(m["extra"]["machine"]["arch"].is_string());
}
