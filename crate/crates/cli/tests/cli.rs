use std::process::{Command, Output};

fn qtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtlab")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn dims_agree_between_presets() {
    let out = qtlab(&["dims", "--surface", "all", "--r-list", "5,9"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    let dim = |p: &str, r: &str| rows.iter().find(|l| l.starts_with(&format!("{p},{r},"))).unwrap().rsplit(',').next().unwrap().to_string();
    assert_eq!(dim("theta2", "9"), dim("dumbbell2", "9"));
}

#[test]
fn colorings_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let out = qtlab(&["colorings", "--surface", "theta2", "--r", "4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.lines().all(|l| l.starts_with("4,") || l.starts_with('r')));
}

#[test]
fn lattice_json() {
    let out = qtlab(&["lattice", "--surface", "dumbbell2"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["covolume_f64"], 0.5);
}

#[test]
fn exit_codes() {
    // Unknown preset is a configuration error.
    assert_eq!(qtlab(&["dims", "--surface", "nope", "--r", "5"]).status.code(), Some(2));
    // Identical decompositions fail screening.
    let same = qtlab(&["intersect", "--pair", "dumbbell2,dumbbell2", "--x", "0.4,0.3,0.4", "--y", "0.4,0.3,0.4"]);
    assert_eq!(same.status.code(), Some(3));
    // Bad flag.
    assert_eq!(qtlab(&["dims", "--bogus"]).status.code(), Some(2));
}

#[test]
fn pair_exact_backends_agree() {
    let run = |backend: &str| {
        let out = qtlab(&["pair-exact", "--r", "9", "--alpha", "3,3,3", "--beta", "5,3,3", "--backend", backend]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["modulus"].as_f64().unwrap()
    };
    assert!((run("move-composition") - run("joint-eigenvector")).abs() < 1e-10);
}

#[test]
fn pair_predict_json() {
    let out = qtlab(&["pair-predict", "--r", "50", "--x", "0.42,0.3,0.46", "--y", "0.38,0.3,0.46"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    assert!(v["total_modulus"].as_f64().unwrap() > 0.0);
    for key in ["theta", "eta", "maslov", "det", "amplitude"] {
        assert!(v["points"][0].get(key).is_some());
    }
}

#[test]
fn study_writes_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let args = ["study", "--x", "0.38,0.3,0.46", "--y", "0.4,0.3,0.46", "--r-list", "20,30", "--out", out_dir.to_str().unwrap()];
    let first = qtlab(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = std::fs::read_to_string(out_dir.join("study.csv")).unwrap();
    assert!(csv.starts_with("r,exact_re,exact_im,exact_mod,pred_mod,ratio,rel_err\n"));
    assert!(out_dir.join("study.json").exists());
    assert!(qtlab(&args).status.success());
    assert_eq!(csv, std::fs::read_to_string(out_dir.join("study.csv")).unwrap());
}

#[test]
fn aborted_study_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let out = qtlab(&["study", "--pair", "dumbbell2,dumbbell2", "--x", "0.4,0.3,0.4", "--y", "0.4,0.3,0.4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.join("study.csv").exists() && !out_dir.join("study.json").exists());
}
