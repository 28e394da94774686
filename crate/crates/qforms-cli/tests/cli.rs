use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn qforms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qforms"))
        .args(args)
        .env_remove("QFORMS_BUDGET")
        .output()
        .expect("binary runs")
}

fn form_file(json: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(json.as_bytes()).unwrap();
    f
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const I5: &str = r#"{"n":5,"matrix":[[1,0,0,0,0],[0,1,0,0,0],[0,0,1,0,0],[0,0,0,1,0],[0,0,0,0,1]]}"#;
const Q2: &str = r#"{"n":4,"matrix":[[1,0,0,0],[0,1,0,0],[0,0,7,0],[0,0,0,7]]}"#;

#[test]
fn analyze_five_squares() {
    let f = form_file(I5);
    let path = f.path().to_str().unwrap();
    let out = qforms(&["analyze", "--form", path]);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.contains("Δ = 1") && text.contains("H = 1") && text.contains("positive-definite"));
    let r = report(&qforms(&["analyze", "--form", path, "--json"]));
    assert_eq!(r["result"]["discriminant"], "1");
    assert_eq!(r["result"]["height"], "1");
    assert_eq!(r["result"]["class"], "positive-definite");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config"]["command"], "analyze");
}

#[test]
fn exceptional_lists_147() {
    let f = form_file(Q2);
    let r = report(&qforms(&["exceptional", "--form", f.path().to_str().unwrap(), "--kmax", "200", "--json"]));
    let weak: Vec<u64> = r["result"]["report"]["weak_exceptions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(weak.contains(&147));
    assert_eq!(r["result"]["envelope_label"], "constant-free (implied constant unknown)");
}

#[test]
fn kneser_minimal_zero() {
    let r = report(&qforms(&["kneser", "--c", "3", "--n", "5", "--search", "54", "--json"]));
    assert_eq!(r["result"]["zero"], serde_json::json!(["1", "2", "6", "18", "54"]));
    assert_eq!(r["result"]["value_at_zero"], "0");
    assert_eq!(r["result"]["search"]["found_first_nonzero"], serde_json::json!([1, 2, 6, 18, 54]));
}

#[test]
fn exit_codes() {
    let bad = form_file(r#"{"n":2,"matrix":[[1,2],[3,1]]}"#);
    let out = qforms(&["analyze", "--form", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("$.matrix[0][1]"));

    let out = qforms(&["zeros", "--diag", "1,1,1", "--bound", "3"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_qforms"))
        .args(["kneser", "--c", "3", "--n", "5", "--search", "54"])
        .env("QFORMS_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = qforms(&["analyze"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = ["delta", "--diag", "1,1,1,1,1", "--k", "100,400", "--samples", "16000", "--seed", "4", "--json"];
    let a = qforms(&args);
    let b = qforms(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r["config"]["seed"], 4);
    assert!(r["result"]["summary"]["sigma_infty"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn local_and_descent_commands() {
    let r = report(&qforms(&["locsolve", "--diag", "1,1,7,7", "--k", "147", "--json"]));
    assert_eq!(r["result"]["weak"], true);
    let r = report(&qforms(&["locsolve", "--diag", "1,1,1,1,1", "--k", "3", "--p", "3", "--tmax", "2", "--json"]));
    assert_eq!(r["result"]["counts"][0]["count"], "81");
    let r = report(&qforms(&["descend", "--diag", "1,1,7,7,7", "--k", "147", "--verify", "--json"]));
    assert_eq!(r["result"]["trace"]["terminal_k"], 21);
    assert_eq!(r["result"]["solubility"]["equivalent"], true);
    let r = report(&qforms(&["sums", "--diag", "1,1,1,1", "--k", "1", "--q", "15", "--c", "0,0,0,0", "--json"]));
    assert!(r["result"]["abs"].as_f64().unwrap() <= r["result"]["envelope_general"].as_f64().unwrap());
    let r = report(&qforms(&["density", "--diag", "1,1,1,1,1", "--k", "5", "--pcut", "200", "--json"]));
    assert_eq!(r["result"]["status"], "interval");
    let r = report(&qforms(&["zeros", "--diag", "1,1,1,1,-1", "--bound", "2", "--json"]));
    assert_eq!(r["result"]["search"]["found"], serde_json::json!([1, 0, 0, 0, 1]));
}
