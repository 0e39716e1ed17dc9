use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn flexreq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexreq")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Chain 0-1-2 with 0.5 MW of generation at bus 2, well inside its ratings,
/// and a forecast-error model without variance.
fn quiet_case(dir: &Path) -> (PathBuf, PathBuf) {
    let network = dir.join("net.json");
    let model = dir.join("model.json");
    fs::write(
        &network,
        r#"{
  "base_mva": 1.0,
  "base_kv": 11.0,
  "buses": [
    {"id": 0, "v_min": 0.9, "v_max": 1.1, "cos_phi": 1.0, "is_slack": true, "p_inj": [0.0]},
    {"id": 1, "v_min": 0.9, "v_max": 1.1, "cos_phi": 0.95, "p_inj": [-0.2]},
    {"id": 2, "v_min": 0.9, "v_max": 1.1, "cos_phi": 0.95, "p_inj": [0.5]}
  ],
  "lines": [
    {"from": 0, "to": 1, "r": 0.01, "x": 0.02, "s_rating": 1.0},
    {"from": 1, "to": 2, "r": 0.01, "x": 0.02, "s_rating": 1.0}
  ],
  "periods": [{"id": 0, "dt_hours": 1.0}]
}"#,
    )
    .unwrap();
    fs::write(
        &model,
        r#"{
  "sources": [{"id": "pv", "bus": 2}],
  "sigma": [[0.0]],
  "epsilons": {"s": 0.05, "v": 0.05, "r": 0.05, "a": 0.05, "c": 0.05, "ns": 0.05},
  "beta": 0.5
}"#,
    )
    .unwrap();
    (network, model)
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().unwrap())
}

#[test]
fn missing_input_file_exits_with_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flexreq(&["create-request", "--network", "/nope/net.json", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nope/net.json"));
}

#[test]
fn generated_network_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    for p in [&a, &b] {
        assert!(flexreq(&["gen", "network", "--buses", "20", "--seed", "3", "--out", s(p)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(read_json(&a)["buses"].as_array().unwrap().len(), 20);
}

#[test]
fn high_liquidity_book_covers_every_bus_both_ways() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("offers.csv");
    assert!(flexreq(&["gen", "bids", "--out", s(&path)]).status.success());
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name| header.iter().position(|h| *h == name).unwrap();
    let (bus, dir) = (col("bus"), col("direction"));
    let mut seen = std::collections::BTreeSet::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        seen.insert((f[bus].parse::<u32>().unwrap(), f[dir].to_owned()));
    }
    let expected: std::collections::BTreeSet<_> =
        (1..15).flat_map(|b| [(b, "up".to_owned()), (b, "down".to_owned())]).collect();
    assert_eq!(seen, expected);
}

#[test]
fn scenario_file_has_the_requested_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("xi.csv");
    assert!(flexreq(&["gen", "scenarios", "--count", "50", "--out", s(&path)]).status.success());
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 51);
}

#[test]
fn quiet_grid_needs_no_requests() {
    let tmp = tempfile::tempdir().unwrap();
    let (network, model) = quiet_case(tmp.path());
    let out = flexreq(&[
        "create-request",
        "--network",
        s(&network),
        "--model",
        s(&model),
        "--out-dir",
        s(tmp.path()),
    ]);
    let dir = run_dir(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no flexibility needed"));
    assert_eq!(read_json(&dir.join("request_book.json")), Value::Array(vec![]));
}

#[test]
fn quiet_grid_buys_nothing_in_the_stochastic_market() {
    let tmp = tempfile::tempdir().unwrap();
    let (network, model) = quiet_case(tmp.path());
    let out = flexreq(&[
        "clear-stoch",
        "--network",
        s(&network),
        "--model",
        s(&model),
        "--out-dir",
        s(tmp.path()),
    ]);
    let clearing = read_json(&run_dir(&out).join("clearing_stoch.json"));
    assert_eq!(clearing["accepted"], Value::Object(Default::default()));
    assert_eq!(clearing["costs"]["procurement"].as_f64(), Some(0.0));
}

#[test]
fn per_node_liquidity_has_no_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("instance.json");
    fs::write(
        &path,
        r#"{
  "requests": [{"bus": 1, "mw": 1.0}, {"bus": 2, "mw": 0.5}],
  "offers": [
    {"bus": 1, "mw": 1.0, "price": 30.0},
    {"bus": 2, "mw": 1.0, "price": 30.0},
    {"bus": 2, "mw": 1.0, "price": 45.0}
  ],
  "lambda_r": 70.0
}"#,
    )
    .unwrap();
    let out = flexreq(&["gap", "--instance", s(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["level"], "per_node");
    for key in ["xi_sc", "xi_fr", "xi_fs"] {
        assert_eq!(report[key].as_f64(), Some(0.0), "{key}");
    }
}

#[test]
fn malformed_gap_instance_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, "{").unwrap();
    assert_eq!(flexreq(&["gap", "--instance", s(&path)]).status.code(), Some(2));
}
