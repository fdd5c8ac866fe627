use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oraclelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oraclelab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_into(args: &[&str], out: &Path) -> (i32, Vec<Value>) {
    let mut full = args.to_vec();
    full.extend(["--out", out.to_str().unwrap()]);
    let o = oraclelab(&full);
    let code = o.status.code().unwrap();
    let rows = std::fs::read_to_string(out.join("results.jsonl"))
        .map(|t| {
            t.lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect()
        })
        .unwrap_or_default();
    (code, rows)
}

fn listed(args: &[&str]) -> Vec<Value> {
    let o = oraclelab(args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn theorem2_grid_passes_with_eight_rows_per_point_and_function() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, rows) = run_into(
        &["verify-theorem2", "--config", "theorem2-grid"],
        tmp.path(),
    );
    assert_eq!(code, 0);
    let mut groups: BTreeMap<(u64, u64, String), usize> = BTreeMap::new();
    for r in &rows {
        assert!(r["experiment"].as_str().unwrap().starts_with("property-"));
        assert_eq!(r["satisfied"], true);
        let key = (
            r["n"].as_u64().unwrap(),
            r["M"].as_u64().unwrap(),
            r["label"].as_str().unwrap().to_string(),
        );
        *groups.entry(key).or_default() += 1;
    }
    assert_eq!(groups.len(), 4 * 3);
    assert!(groups.values().all(|&c| c == 8));
    let csv = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "experiment,n,M,gamma,q,measured,bound,satisfied,runtime_ms"
    );
    assert_eq!(csv.lines().count(), rows.len() + 1);
    assert!(tmp.path().join("metadata.json").exists());
}

#[test]
fn tightened_bounds_exit_with_a_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, rows) = run_into(
        &["collision", "--config", "collision-tightened"],
        tmp.path(),
    );
    assert_eq!(code, 1);
    assert!(rows.iter().any(|r| r["satisfied"] == false));
    // The same experiment with its real bounds passes.
    let (code, _) = run_into(&["collision"], &tmp.path().join("plain"));
    assert_eq!(code, 0);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    assert_eq!(
        run_into(&["verify-commutator", "--config", "missing-relation"], out).0,
        2
    );
    assert_eq!(
        run_into(&["grover", "--config", "no-such-config"], out).0,
        2
    );
    // A config for another experiment.
    assert_eq!(run_into(&["grover", "--config", "theorem2-grid"], out).0, 2);
    assert_eq!(run_into(&["sweep"], out).0, 2);
    assert_eq!(run_into(&["grover", "--backend", "tensor"], out).0, 2);
    let bad = out.join("bad.json");
    std::fs::write(&bad, r#"{"experiment": "fo", "bound_scale": -1}"#).unwrap();
    assert_eq!(
        run_into(&["fo", "--config", bad.to_str().unwrap()], out).0,
        2
    );
    // An empty fixture directory leaves nothing to reference.
    let empty = tempfile::tempdir().unwrap();
    let args = [
        "fo",
        "--config",
        "fo-faulty",
        "--fixtures",
        empty.path().to_str().unwrap(),
    ];
    assert_eq!(run_into(&args, out).0, 2);
}

#[test]
fn list_fixtures_filters_by_module() {
    let all = listed(&["list-fixtures"]);
    assert!(all.len() >= 10);
    let fo = listed(&["list-fixtures", "--module", "fo-kem"]);
    assert!(!fo.is_empty() && fo.len() < all.len());
    assert!(fo
        .iter()
        .all(|f| f["module"] == "fo-kem" && f["kind"] == "pke"));
    let empty = tempfile::tempdir().unwrap();
    assert!(listed(&[
        "list-fixtures",
        "--fixtures",
        empty.path().to_str().unwrap()
    ])
    .is_empty());
    assert!(listed(&["list-fixtures", "--fixtures", "/nonexistent/oraclelab"]).is_empty());
}

#[test]
fn sweep_runs_every_entry_with_split_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/sweep-quick.json");
    let (code, rows) = run_into(&["sweep", "--config", config, "--seed", "5"], tmp.path());
    assert_eq!(code, 0);
    let mut seeds: BTreeMap<String, u64> = BTreeMap::new();
    for r in &rows {
        seeds.insert(
            r["run"].as_str().unwrap().to_string(),
            r["seed"].as_u64().unwrap(),
        );
    }
    assert_eq!(seeds.len(), 4);
    let distinct: std::collections::BTreeSet<_> = seeds.values().collect();
    assert_eq!(distinct.len(), 4);
    assert!(tmp.path().join("traces.jsonl").exists());
}

#[test]
fn fo_traces_are_json_lines_and_informational_rows_are_not_asserted() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, rows) = run_into(&["fo", "--config", "fo-faulty"], tmp.path());
    assert_eq!(code, 0);
    let advantage: Vec<_> = rows
        .iter()
        .filter(|r| r["experiment"] == "fo-advantage")
        .collect();
    assert!(!advantage.is_empty());
    assert!(advantage.iter().all(|r| r["asserted"] == false));
    assert!(rows
        .iter()
        .any(|r| r["experiment"] == "fo-decaps-agreement" && r["asserted"] == true));
    let traces = std::fs::read_to_string(tmp.path().join("traces.jsonl")).unwrap();
    let calls: Vec<Value> = traces
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(calls
        .iter()
        .any(|c| c["call"] == "decaps" && c["backend"] == "simulated-decaps"));
    assert!(calls.iter().all(|c| c["run"].is_string()));
}

#[test]
fn timing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, plain) = run_into(&["grover"], &tmp.path().join("a"));
    assert!(plain.iter().all(|r| r.get("runtime_ms").is_none()));
    let (_, timed) = run_into(&["grover", "--timing"], &tmp.path().join("b"));
    assert!(timed.iter().all(|r| r["runtime_ms"].as_f64().is_some()));
}
