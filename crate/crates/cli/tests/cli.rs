use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_removal-lab"));
    c.env_remove("REMOVAL_LAB_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn count_reports_both_counts() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "k4.el", "4 6\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n");
    let o = run(dir.path(), &["count", "--graph", "k4.el", "--pattern", "triangle"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["labeled"], 24);
    assert_eq!(v["unlabeled"], 4);
}

#[test]
fn generated_rs_graph_round_trips_through_count() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["gen", "rs", "--m", "12", "--out", "rs.el"])), 0);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rs.el.json")).unwrap()).unwrap();
    let s = sidecar["behrend"]["elements"].as_array().unwrap().len() as u64;
    let o = run(dir.path(), &["count", "--graph", "rs.el"]);
    assert_eq!(stdout_json(&o)["unlabeled"], 12 * s);
    let o = run(dir.path(), &["pack", "--graph", "rs.el", "--mode", "randomized", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["size"], 12 * s);
}

#[test]
fn refine_is_reproducible_and_reports() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["gen", "rs", "--m", "10", "--out", "rs.el"])), 0);
    for out in ["a.jsonl", "b.jsonl"] {
        let o = run(
            dir.path(),
            &["refine", "--graph", "rs.el", "--pattern", "triangle", "--alpha", "0.05", "--seed", "7", "--part-floor", "10", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    let last: serde_json::Value = serde_json::from_str(String::from_utf8(a).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["record"], "end");

    let o = run(dir.path(), &["report", "--trace", "a.jsonl"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][3], "entropy");
    let entropies: Vec<f64> = rows[1..].iter().filter_map(|r| r[3].parse().ok()).collect();
    assert!(entropies.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{entropies:?}");
    assert_eq!(rows.last().unwrap()[0], "end");
}

#[test]
fn removable_graph_gives_single_row_report() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "g.el", "10 3\n0 1\n1 2\n0 2\n");
    let o = run(dir.path(), &["refine", "--graph", "g.el", "--eps", "1/2", "--seed", "1", "--out", "t.jsonl"]);
    assert_eq!(code(&o), 0);
    let o = run(dir.path(), &["report", "--trace", "t.jsonl"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].ends_with("removable,3"), "{}", rows[1]);
}

#[test]
fn empty_trace_reports_header_only() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.jsonl", "");
    let o = run(dir.path(), &["report", "--trace", "t.jsonl"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
    write(dir.path(), "bad.jsonl", "{\"record\":\"init\"}\n");
    assert_eq!(code(&run(dir.path(), &["report", "--trace", "bad.jsonl"])), 1);
}

#[test]
fn constants_reports_tower_height() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["constants", "--h", "3", "--eps", "0.3678794", "--alpha", "0.1"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["tower_height"]["used"], 405);
    let o = run(dir.path(), &["constants", "--h", "3", "--eps", "e^-1", "--alpha", "1/10"]);
    assert_eq!(stdout_json(&o)["tower_height"]["exact"], "405");
}

#[test]
fn shatter_uses_sidecar_parts() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["gen", "blowup", "--pattern", "triangle", "--sizes", "8,8,8", "--out", "b.el"])), 0);
    let o = run(dir.path(), &["shatter", "--graph", "b.el", "--alpha", "1/10", "--copy-density", "1/4", "--mode", "exhaustive"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    // K_{8,8,8} has 512 > n^3/4 triangles across the parts.
    assert_eq!(v["outcome"], "many_copies");
    let o = run(dir.path(), &["shatter", "--graph", "b.el", "--alpha", "1/10", "--copy-density", "theoretical", "--mode", "exhaustive"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tester_rate_and_verdict() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "k3.el", "3 3\n0 1\n1 2\n0 2\n");
    let o = run(dir.path(), &["test", "--graph", "k3.el", "--delta", "1/2", "--seed", "3", "--trials", "20000"]);
    let rate = stdout_json(&o)["rate"].as_str().unwrap().to_string();
    let (p, q) = rate.split_once('/').unwrap();
    let rate = p.parse::<f64>().unwrap() / q.parse::<f64>().unwrap();
    assert!((rate - (1.0 - (21.0f64 / 27.0).powi(4))).abs() < 0.02);
    let o = run(dir.path(), &["test", "--graph", "k3.el", "--delta", "1/2", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout_json(&o)["verdict"].is_string());
}

#[test]
fn exit_codes_partition_failures() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "k3.el", "3 3\n0 1\n1 2\n0 2\n");
    // Randomized commands without a seed.
    assert_eq!(code(&run(dir.path(), &["test", "--graph", "k3.el", "--delta", "1/2"])), 1);
    assert_eq!(code(&run(dir.path(), &["gen", "random", "--n", "5", "--p", "1/2"])), 1);
    assert_eq!(code(&run(dir.path(), &["refine", "--graph", "k3.el"])), 1);
    // Bad input.
    assert_eq!(code(&run(dir.path(), &["count", "--graph", "missing.el"])), 1);
    assert_eq!(code(&run(dir.path(), &["count", "--graph", "k3.el", "--pattern", "star"])), 1);
    assert_eq!(code(&run(dir.path(), &["count", "--graph", "k3.el", "--frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["test", "--graph", "k3.el", "--delta", "3/2", "--seed", "1"])), 1);
    // Budgets.
    assert_eq!(code(&run(dir.path(), &["gen", "random", "--n", "30", "--p", "1/2", "--seed", "2", "--out", "r.el"])), 0);
    assert_eq!(code(&run(dir.path(), &["remove", "--graph", "r.el", "--budget", "10"])), 2);
    assert_eq!(code(&run(dir.path(), &["pack", "--graph", "r.el", "--budget", "1"])), 2);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn thread_cap_keeps_output_identical() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "k3.el", "3 3\n0 1\n1 2\n0 2\n");
    let args = ["test", "--graph", "k3.el", "--delta", "1/2", "--seed", "5", "--trials", "5000"];
    let one = bin().current_dir(dir.path()).env("REMOVAL_LAB_THREADS", "1").args(args).output().unwrap();
    let many = bin().current_dir(dir.path()).env("REMOVAL_LAB_THREADS", "4").args(args).output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, many.stdout);
    let bad = bin().current_dir(dir.path()).env("REMOVAL_LAB_THREADS", "zero").args(args).output().unwrap();
    assert_eq!(code(&bad), 1);
}
