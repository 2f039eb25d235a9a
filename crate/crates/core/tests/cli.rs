use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use rtcollect::cli::{run, Cli};
use rtcollect::io::{parse_queries, parse_topology, write_queries, write_topology};
use rtcollect::sim::{generate_queries, generate_topology, SimConfig, SWEEP_CSV_HEADER};
use tempfile::TempDir;

const LINE: &str = "sink 0\nrange 50\n0 0 0\n1 40 0\n2 80 0\n3 120 0\n";

fn invoke(args: &[&str]) -> (i32, String) {
    let cli = Cli::try_parse_from(std::iter::once("rtcollect").chain(args.iter().copied())).expect("arguments");
    let mut out = Vec::new();
    let code = run(cli, &mut out).expect("command");
    (code, String::from_utf8(out).expect("utf8"))
}

fn files(dir: &TempDir, queries: &str) -> (String, String) {
    let t = dir.path().join("topo.txt");
    let q = dir.path().join("queries.txt");
    fs::write(&t, LINE).unwrap();
    fs::write(&q, queries).unwrap();
    (t.display().to_string(), q.display().to_string())
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn check_passes_light_instance() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "0 2,3 0.0001 20 0 400 1\n");
    let (code, out) = invoke(&["check", "--topology", &t, "--queries", &q]);
    assert_eq!(code, 0);
    assert!(out.contains("sufficient: PASS"), "{out}");
    assert!(out.contains("necessary: PASS"), "{out}");
}

#[test]
fn check_reports_sink_overload() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "0 2,3 0.3 0.5 0 400 1\n");
    let (code, out) = invoke(&["check", "--topology", &t, "--queries", &q]);
    assert_eq!(code, 1);
    assert!(out.contains("necessary: FAIL (sink load 1.2 > 1)"), "{out}");
    assert!(out.contains("sufficient: FAIL"), "{out}");
}

#[test]
fn check_empty_queries_warns_and_passes() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "# nothing yet\n");
    let (code, out) = invoke(&["check", "--topology", &t, "--queries", &q]);
    assert_eq!(code, 0);
    assert!(out.starts_with("warning:"), "{out}");
    assert!(out.contains("sufficient: PASS"));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let (t, _) = files(&dir, "");
    let q = dir.path().join("bad.txt");
    fs::write(&q, "0 1 0.1 20 0 80 1\n1 2 0.1 twenty 0 80 1\n").unwrap();
    let cli = Cli::try_parse_from(["rtcollect", "check", "--topology", &t, "--queries", &path(&q)]).unwrap();
    let err = run(cli, &mut Vec::new()).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn binary_exit_status_follows_sufficient_test() {
    let dir = TempDir::new().unwrap();
    let (t, ok) = files(&dir, "0 2,3 0.0001 20 0 400 1\n");
    let over = dir.path().join("over.txt");
    fs::write(&over, "0 2,3 0.3 0.5 0 400 1\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_rtcollect");
    let status = |q: &str| Command::new(bin).args(["check", "--topology", &t, "--queries", q]).status().unwrap();
    assert_eq!(status(&ok).code(), Some(0));
    assert_eq!(status(&path(&over)).code(), Some(1));
    let missing = Command::new(bin).args(["check", "--topology", "/nonexistent", "--queries", &ok]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));
}

#[test]
fn schedule_writes_trees_and_frame() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "0 2,3 0.0001 20 0 400 1\n");
    let out_dir = dir.path().join("sched");
    let (code, _) = invoke(&["schedule", "--topology", &t, "--queries", &q, "--out", &path(&out_dir)]);
    assert_eq!(code, 0);
    let trees = fs::read_to_string(out_dir.join("trees.txt")).unwrap();
    assert!(trees.lines().any(|l| l == "-1 3 2"));
    assert!(trees.lines().any(|l| l == "0 1 0"));
    let frame = fs::read_to_string(out_dir.join("frame.txt")).unwrap();
    // three transmitting nodes share one region window of length T = 10
    let rows: Vec<Vec<f64>> = frame
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let total: f64 = rows.iter().map(|r| r[5]).sum();
    assert!((total - 10.0).abs() < 1e-9);
}

#[test]
fn select_writes_parsable_subset() {
    let dir = TempDir::new().unwrap();
    let q = dir.path().join("q.txt");
    fs::write(&q, "0 1 0.0001 1 0 10 5\n1 1 0.0002 1 0 10 3\n2 1 0.9 1 0 10 100\n").unwrap();
    let sel = dir.path().join("sel.txt");
    let (code, out) = invoke(&["select", "--queries", &path(&q), "--out", &path(&sel)]);
    assert_eq!(code, 0);
    assert!(out.contains("selected: 2"), "{out}");
    assert!(out.contains("phase: single"), "{out}");
    let chosen = parse_queries(&fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(chosen.len(), 1);
    assert_eq!(chosen[0].id, 2);
}

#[test]
fn written_files_parse_back_identically() {
    let cfg = SimConfig { seed: 5, node_count: 40, ..Default::default() };
    let net = generate_topology(&cfg).unwrap();
    let queries = generate_queries(&cfg, &net).unwrap();
    let net2 = parse_topology(&write_topology(&net)).unwrap();
    assert_eq!(net2.nodes(), net.nodes());
    assert_eq!(net2.links(), net.links());
    assert_eq!(parse_queries(&write_queries(&queries)).unwrap(), queries);
}

#[test]
fn simulate_from_files_writes_trace_and_rounds() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "0 2,3 0.01 20 0 400 1\n");
    let trace = dir.path().join("trace.txt");
    let rounds = dir.path().join("rounds.txt");
    let (code, out) = invoke(&[
        "simulate", "--topology", &t, "--queries", &q, "--duration", "1000", "--trace", &path(&trace), "--rounds",
        &path(&rounds),
    ]);
    assert_eq!(code, 0);
    let metrics: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(metrics["success_ratio"], 1.0);
    let trace = fs::read_to_string(trace).unwrap();
    assert!(trace.lines().next().unwrap().starts_with("release 0"));
    assert!(trace.lines().any(|l| l.starts_with("deliver ")));
    let rounds = fs::read_to_string(rounds).unwrap();
    assert!(rounds.lines().filter(|l| !l.starts_with('#')).all(|l| l.ends_with("true")));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\nnode_count = 30\nduration = 400.0\n[model]\nkind = \"prim\"\nrho = 3.0\n").unwrap();
    let (_, from_file) = invoke(&["simulate", "--config", &path(&cfg)]);
    let m: serde_json::Value = serde_json::from_str(&from_file).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["nodes"], 30);
    let (_, overridden) = invoke(&["simulate", "--config", &path(&cfg), "--seed", "8", "--nodes", "25"]);
    let m: serde_json::Value = serde_json::from_str(&overridden).unwrap();
    assert_eq!(m["seed"], 8);
    assert_eq!(m["nodes"], 25);
}

#[test]
fn sweep_rows_follow_parameter_then_seed() {
    let (code, out) = invoke(&["sweep", "--sweep", "size:50:250:25", "--seeds", "2", "--duration", "200", "--max-queries", "3"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
    let keys: Vec<(usize, u64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(keys.len(), 18);
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn sources_sweep_gives_ten_rows_per_seed() {
    let (_, out) = invoke(&[
        "sweep", "--sweep", "sources:10:100:10", "--seeds", "1", "--nodes", "100", "--duration", "100", "--max-queries",
        "2",
    ]);
    assert_eq!(out.lines().count(), 11);
    let (_, out) = invoke(&["sweep", "--sweep", "size:60:60:10", "--seeds", "1", "--duration", "100"]);
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn model_flags_select_parameters() {
    let dir = TempDir::new().unwrap();
    let (t, q) = files(&dir, "0 2,3 0.0001 20 0 4000 1\n");
    let (_, out) = invoke(&["check", "--topology", &t, "--queries", &q, "--model", "prim", "--rho", "3"]);
    assert!(out.starts_with("model: prim"), "{out}");
    let (_, out) = invoke(&["check", "--topology", &t, "--queries", &q, "--model", "phim", "--beta", "2", "--kappa", "4"]);
    assert!(out.starts_with("model: phim"), "{out}");
    let bad = Cli::try_parse_from(["rtcollect", "check", "--topology", &t, "--queries", &q, "--model", "prim", "--rho", "0.5"]).unwrap();
    assert!(run(bad, &mut Vec::new()).is_err());
}
