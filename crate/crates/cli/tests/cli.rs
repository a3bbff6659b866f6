use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const EXAMPLE: &str = r#"{"vertices":[
  {"id":"a","parent":"r","threshold":1,"x":"3/10","y":"1/10"},
  {"id":"b","parent":"r","threshold":1,"x":"1/4","y":"1/5"},
  {"id":"r","parent":null,"threshold":1,"x":"3/20"}]}"#;

const INTERIOR_TWO: &str = r#"{"vertices":[
  {"id":"a","parent":"r","threshold":2,"x":"1/3","y":"1/3"},
  {"id":"r","parent":null,"threshold":1,"x":"1/3"}]}"#;

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn treepile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treepile"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stationary_product_matches_exact() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    let exact = stdout(&treepile(&["stationary", "--tree", &t, "--model", "trickle", "--method", "exact"]));
    let product = stdout(&treepile(&["stationary", "--tree", &t, "--model", "trickle", "--method", "product"]));
    assert_eq!(exact, product);
    assert_eq!(exact.lines().count(), 8);
    assert!(!exact.contains('.'));
}

#[test]
fn charpoly_formula_matches_exact() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    let exact = stdout(&treepile(&["charpoly", "--tree", &t, "--method", "exact"]));
    let formula = stdout(&treepile(&["charpoly", "--tree", &t, "--method", "formula"]));
    assert_eq!(exact, formula);
    let v: serde_json::Value = serde_json::from_str(&exact).unwrap();
    assert_eq!(v["vars"][0], "λ");
}

#[test]
fn landslide_product_needs_unit_interior_thresholds() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "two.json", INTERIOR_TWO);
    let o = treepile(&["stationary", "--tree", &t, "--model", "landslide", "--method", "product"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("threshold 1"), "{err}");
    assert!(!err.to_lowercase().contains("theorem"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    assert_eq!(treepile(&["matrix", "--tree", &t, "--max-states", "4"]).status.code(), Some(3));
    let cyclic = write(
        &dir,
        "bad.json",
        r#"{"vertices":[{"id":"a","parent":"b","threshold":1,"x":"1/2"},{"id":"b","parent":"a","threshold":1,"x":"1/2"}]}"#,
    );
    assert_eq!(treepile(&["validate", "--tree", &cyclic]).status.code(), Some(2));
    assert_eq!(treepile(&["states"]).status.code(), Some(2));
    let unnormalized = write(
        &dir,
        "sum.json",
        r#"{"vertices":[{"id":"r","parent":null,"threshold":1,"x":"1/2","y":"1/3"}]}"#,
    );
    assert_eq!(treepile(&["validate", "--tree", &unnormalized]).status.code(), Some(2));
    assert_eq!(stdout(&treepile(&["validate", "--tree", &t])), "ok;3;8\n");
}

#[test]
fn apply_runs_words_left_to_right() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    assert_eq!(stdout(&treepile(&["apply", "--tree", &t, "--config", "0,0,0", "sigma_a", "sigma_a"])), "1,0,1\n");
    assert_eq!(stdout(&treepile(&["apply", "--tree", &t, "--config", "1,1,1", "τ_r"])), "1,1,0\n");
    assert_eq!(treepile(&["apply", "--tree", &t, "--config", "0,0,0", "tau_z"]).status.code(), Some(2));
}

fn manifest_of(out: &Path) -> serde_json::Value {
    let side = format!("{}.manifest.json", out.display());
    serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap()
}

#[test]
fn manifests_and_reproducible_artifacts() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = treepile(&[
            "converge", "--tree", &t, "--k-max", "6", "--trials", "500", "--seed", "9",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (ba, bb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ba, bb);
    let m = manifest_of(&a);
    assert_eq!(m["artifact_sha256"], hex::encode(Sha256::digest(&ba)));
    assert_eq!(m["input_sha256"], hex::encode(Sha256::digest(EXAMPLE.as_bytes())));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["command"], "converge");
    assert!(m["version"].is_string() && m["timestamp"].is_string());
}

#[test]
fn spectrum_and_monoid_reports() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    let spec = stdout(&treepile(&["spectrum", "--tree", &t]));
    let total: i64 = spec.lines().map(|l| l.split(';').nth(1).unwrap().parse::<i64>().unwrap()).sum();
    assert_eq!(total, 8);
    let report: serde_json::Value =
        serde_json::from_str(&stdout(&treepile(&["monoid", "--tree", &t, "--set", "M"]))).unwrap();
    assert_eq!(report["r_trivial"], true);
    assert_eq!(report["lattice"].as_array().unwrap().len(), 8);
    let j: serde_json::Value =
        serde_json::from_str(&stdout(&treepile(&["monoid", "--tree", &t, "--set", "J"]))).unwrap();
    assert_eq!(j["j_trivial"], true);
    let dot = stdout(&treepile(&["cayley", "--tree", &t, "--side", "left"]));
    assert!(dot.starts_with("digraph left_cayley {"));
}

#[test]
fn upset_statistic_and_conjecture() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "ex.json", EXAMPLE);
    let claims: serde_json::Value =
        serde_json::from_str(&stdout(&treepile(&["upset-stat", "--tree", &t, "--pairs", "2000"]))).unwrap();
    assert_eq!(claims["monotone_violations"], 0);
    assert_eq!(claims["strict_violations"], 0);
    let c = stdout(&treepile(&["conjecture", "--thresholds", "2,1", "--format", "csv"]));
    assert!(c.starts_with("match;symbolic;"), "{c}");
    assert_eq!(treepile(&["conjecture", "--thresholds", "1,1,1,1,1"]).status.code(), Some(3));
}
