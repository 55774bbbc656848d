use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn chowla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chowla"))
        .args(args)
        .env_remove("CHOWLA_OUT_DIR")
        .output()
        .expect("spawn chowla")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn classify_reports_admissibility() {
    let out = chowla(&["classify", "--poly", "x^2+1"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["meta"]["command"], "classify");
    assert_eq!(doc["result"]["clt_admissible"], true);
    assert_eq!(doc["result"]["fluct_admissible"], true);

    let doc = stdout_json(&chowla(&["classify", "--poly", "x^2-x"]));
    assert_eq!(doc["result"]["clt_admissible"], true);
    assert_eq!(doc["result"]["fluct_admissible"], false);
}

#[test]
fn pure_power_energy_is_a_config_error() {
    let out = chowla(&["energy", "--poly", "0,0,1", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["field"], "poly");
}

#[test]
fn energy_small_example() {
    let doc = stdout_json(&chowla(&["energy", "--poly", "x^2+1", "--n", "3"]));
    assert_eq!(doc["result"]["total"], 15);
    assert_eq!(doc["result"]["nontrivial"], 0);
}

#[test]
fn energy_chunked_matches_direct() {
    let direct = stdout_json(&chowla(&["energy", "--poly", "x^2-6x", "--n", "40"]));
    let chunked = stdout_json(&chowla(&[
        "energy", "--poly", "x^2-6x", "--n", "40", "--chunked", "--pair-budget", "100",
    ]));
    assert_eq!(direct["result"]["total"], chunked["result"]["total"]);
    assert!(chunked["result"]["partitions"].as_u64().unwrap() > 1);
}

#[test]
fn budget_overflow_exits_3() {
    let out = chowla(&["energy", "--poly", "x^2+1", "--n", "1000", "--pair-budget", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "budget");

    let out = chowla(&["--max-rows", "10", "sieve", "--poly", "x^2+1", "--n", "11"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn clt_writes_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clt.json");
    let out = chowla(&[
        "clt", "--poly", "x^2+1", "--n", "1000", "--reps", "100", "--seed", "7",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["meta"]["config"]["seed"], 7);
    assert_eq!(doc["result"]["reps"], 100);
    assert!(doc["result"]["stats"]["exact_fourth_moment"].is_string());
}

#[test]
fn clt_is_reproducible_and_accepts_hex_seeds() {
    let a = stdout_json(&chowla(&["clt", "--poly", "x^2+1", "--n", "200", "--reps", "100", "--seed", "0x10"]));
    let b = stdout_json(&chowla(&["clt", "--poly", "x^2+1", "--n", "200", "--reps", "100", "--seed", "16"]));
    assert_eq!(a["result"]["stats"], b["result"]["stats"]);
}

#[test]
fn too_few_replicates_is_a_config_error() {
    let out = chowla(&["clt", "--poly", "x^2+1", "--n", "100", "--reps", "5", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["field"], "reps");
}

#[test]
fn bad_arguments_exit_2_and_help_exits_0() {
    let out = chowla(&["energy", "--poly", "x^2+1", "--n", "ten"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");

    let out = chowla(&["--poly-typo"]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(chowla(&["--help"]).status.code(), Some(0));
    assert_eq!(chowla(&["--version"]).status.code(), Some(0));
    assert_eq!(chowla(&["fluct", "--help"]).status.code(), Some(0));
}

#[test]
fn dry_run_validates_without_computing() {
    let out = chowla(&["--dry-run", "energy", "--poly", "x^2+1", "--n", "100000", "--chunked"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["dry_run"], true);
    assert_eq!(doc["result"]["checks"]["estimated_pairs"], 5_000_050_000u64);

    let out = chowla(&["--dry-run", "energy", "--poly", "x^2+1", "--n", "100000"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sieve = dir.path().join("sieve.csv");
    let out = chowla(&["sieve", "--poly", "x^2+1", "--n", "20", "--out", sieve.to_str().unwrap()]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(&sieve).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "n");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    // 7² + 1 = 50 = 2·5²
    assert_eq!(&rows[6][1], "50");

    let audit = dir.path().join("audit.csv");
    let out = chowla(&["audit", "--poly", "x^2+1", "--grid", "50,100", "--out", audit.to_str().unwrap()]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(&audit).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "1");
}

#[test]
fn out_dir_env_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chowla"))
        .args(["classify", "--poly", "x^3+x", "--out", "sub/class.json"])
        .env("CHOWLA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("sub/class.json").exists());
}

#[test]
fn fluct_runs_and_rejects_linear_products() {
    let out = chowla(&[
        "fluct", "--poly", "x^2+1", "--x", "100", "--k", "2", "--ratio", "4", "--reps", "20", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["scales"].as_array().unwrap().len(), 2);

    let out = chowla(&[
        "fluct", "--poly", "x^2-1", "--x", "100", "--k", "2", "--ratio", "4", "--reps", "20", "--seed", "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
