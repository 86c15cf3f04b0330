use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stairlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stairlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn laminate_build_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = stairlab(
        d,
        &["laminate", "build", "--lambda", "2", "--depth", "2000"],
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("atoms 4001"));
    let doc = read_json(&d.join("staircase.json"));
    assert_eq!(doc["atoms"].as_array().unwrap().len(), 4001);

    let o = stairlab(
        d,
        &["laminate", "verify", "staircase.json", "--out-dir", "ok"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&d.join("ok/laminate_report.json"));
    assert!(report["barycenter_drift"].as_f64().unwrap() <= 2e-7);

    let mut bad = doc.clone();
    let w = bad["atoms"][7]["w"].as_f64().unwrap();
    bad["atoms"][7]["w"] = (w + 1e-3).into();
    std::fs::write(d.join("bad.json"), bad.to_string()).unwrap();
    let o = stairlab(d, &["laminate", "verify", "bad.json", "--out-dir", "bad"]);
    assert_eq!(code(&o), 1);
    assert!(d.join("bad/tail_upper.csv").exists() && d.join("bad/tail_lower.csv").exists());

    let text = std::fs::read_to_string(d.join("staircase.json")).unwrap();
    std::fs::write(d.join("cut.json"), &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&stairlab(d, &["laminate", "verify", "cut.json"])), 2);
}

#[test]
fn laminate_usage_errors_and_dirac() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&stairlab(d, &["laminate", "build", "--lambda", "1"])),
        2
    );
    assert_eq!(
        code(&stairlab(d, &["laminate", "build", "--x0", "1,0,0,1"])),
        2
    );
    assert_eq!(code(&stairlab(d, &["laminate", "frobnicate"])), 2);

    assert_eq!(
        code(&stairlab(
            d,
            &["laminate", "build", "--depth", "0", "--out", "dirac.json"]
        )),
        0
    );
    let doc = read_json(&d.join("dirac.json"));
    let atoms = doc["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 1);
    assert_eq!(atoms[0]["w"].as_f64(), Some(1.0));
    assert_eq!(atoms[0]["m"], doc["soar"][0]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# staircase\nlambda = 4\ndepth = 50\n").unwrap();
    let o = stairlab(
        d,
        &["laminate", "build", "--config", "run.cfg", "--depth", "10"],
    );
    assert_eq!(code(&o), 0);
    let doc = read_json(&d.join("staircase.json"));
    assert_eq!(doc["params"]["lambda"].as_f64(), Some(4.0));
    assert_eq!(doc["atoms"].as_array().unwrap().len(), 21);

    std::fs::write(d.join("typo.cfg"), "lamda = 4\n").unwrap();
    assert_eq!(
        code(&stairlab(d, &["laminate", "build", "--config", "typo.cfg"])),
        2
    );
    assert_eq!(
        code(&stairlab(
            d,
            &["laminate", "build", "--config", "absent.cfg"]
        )),
        2
    );
}

#[test]
fn field_realize_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "--lambda", "2", "--depth", "4", "--rounds", "2", "--eps", "0.05",
    ];
    let mut realize = vec!["field", "realize", "--svg", "field.svg"];
    realize.extend(args);
    let o = stairlab(d, &realize);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.starts_with("round"));
    assert!(d.join("field.svg").exists());

    let field = read_json(&d.join("field.json"));
    let history = field["meta"]["history"].as_array().unwrap();
    assert_eq!(history.len(), 3);
    assert!(history[2]["error_integral"].as_f64().unwrap() <= 0.25);

    let mut verify = vec!["field", "verify", "field.json", "--out-dir", "report"];
    verify.extend(args);
    let o = stairlab(d, &verify);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["report.json", "tails.csv", "residuals.csv"] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }
    let residuals = std::fs::read_to_string(d.join("report/residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 11);
}

#[test]
fn zeroed_gradient_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&stairlab(d, &["field", "realize", "--depth", "2"])), 0);
    let mut field = read_json(&d.join("field.json"));
    field["cells"][0]["X"] = serde_json::json!([[0.0, 0.0], [0.0, 0.0]]);
    std::fs::write(d.join("zeroed.json"), field.to_string()).unwrap();
    assert_eq!(
        code(&stairlab(
            d,
            &["field", "verify", "field.json", "--depth", "2"]
        )),
        0
    );
    let o = stairlab(
        d,
        &[
            "field",
            "verify",
            "zeroed.json",
            "--depth",
            "2",
            "--out-dir",
            "z",
        ],
    );
    assert_eq!(code(&o), 1);
    let report = read_json(&d.join("z/report.json"));
    assert_eq!(report["structure"]["pass"], false);
    assert_eq!(report["membership"]["pass"], false);
}

#[test]
fn field_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&stairlab(
            d,
            &["field", "realize", "--depth", "0", "--out", "flat.json"]
        )),
        0
    );
    let field = read_json(&d.join("flat.json"));
    assert_eq!(field["cells"].as_array().unwrap().len(), 1);
    assert_eq!(field["cells"][0]["X"], field["boundary"]["X"]);
    assert_eq!(
        code(&stairlab(
            d,
            &["field", "verify", "flat.json", "--depth", "0"]
        )),
        0
    );

    let o = stairlab(
        d,
        &["field", "realize", "--eps", "2", "--out", "never.json"],
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not fit inside U"));
    assert!(!d.join("never.json").exists());

    assert_eq!(code(&stairlab(d, &["field", "realize", "--eta", "0"])), 2);
    assert_eq!(code(&stairlab(d, &["field", "verify", "missing.json"])), 2);
}
