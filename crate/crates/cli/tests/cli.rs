use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qbmor(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbmor"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("qbmor runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_burgers_writes_enumerable_file_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = qbmor(&["gen", "--problem", "burgers", "--n", "16", "--nu", "0.1", "--seed", "7", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(dir.path().join("b"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["A.mtx", "B.mtx", "C.mtx", "H.mtx", "manifest.json"]);
}

#[test]
fn gen_synthetic_dae_writes_all_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let o = qbmor(
        &["gen", "--problem", "synthetic-dae", "--nv", "20", "--np", "4", "--quad-scale", "0.1", "--with-c2", "--out", "d"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["type"], "dae");
    for key in ["E11", "A11", "A12", "A21", "H", "N", "B1", "C1", "C2"] {
        assert!(manifest["matrices"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(manifest["dims"]["n_v"], 20);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = qbmor(&["gen", "--problem", "burgers"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
    qbmor(&["gen", "--problem", "burgers", "--n", "12", "--nu", "0.1", "--out", "b"], dir.path());
    let o = qbmor(&["reduce", "--system", "b/manifest.json", "--order", "12", "--out", "r"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("order must be < state dimension"));
    let o = qbmor(&["reduce", "--system", "b/manifest.json", "--order", "3", "--tol", "0", "--out", "r"], dir.path());
    assert_eq!(code(&o), 2);
    let o = qbmor(&["simulate", "--system", "b/manifest.json", "--input", "sine", "--out", "t.csv"], dir.path());
    assert_eq!(code(&o), 2);
    let o = qbmor(&["frobnicate"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = qbmor(&["norm", "--system", "missing.json"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.json"));
    fs::write(dir.path().join("a.csv"), "t,u_1,y_1\n0,0,0\n0.1,0,1\n").unwrap();
    fs::write(dir.path().join("b.csv"), "t,u_1,y_1\n0,0,0\n0.2,0,1\n").unwrap();
    let o = qbmor(&["compare", "--full", "a.csv", "--reduced", "b.csv"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid mismatch"));
}

#[test]
fn non_convergence_exits_3_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    qbmor(&["gen", "--problem", "burgers", "--n", "30", "--nu", "0.05", "--out", "b"], dir.path());
    let o = qbmor(
        &["reduce", "--system", "b/manifest.json", "--order", "4", "--max-iters", "2", "--seed", "42", "--out", "r"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/trace.json")).unwrap()).unwrap();
    assert_eq!(trace["converged"], false);
    assert_eq!(trace["iterations"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("r/manifest.json").exists());
}

#[test]
fn full_pipeline_on_small_burgers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = qbmor(args, dir.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        o
    };
    run(&["gen", "--problem", "burgers", "--n", "20", "--nu", "0.5", "--out", "b"]);
    run(&["reduce", "--system", "b/manifest.json", "--order", "6", "--seed", "1", "--out", "r"]);
    let reduced: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/manifest.json")).unwrap()).unwrap();
    for key in ["E", "A", "H", "B", "C", "CHhat", "Dhat", "V", "W"] {
        assert!(reduced["matrices"].get(key).is_some(), "missing {key}");
    }
    fs::write(dir.path().join("u.csv"), "t,u_1\n0,0\n1,0.05\n2,0.1\n").unwrap();
    for (input, name) in [("preset:cavity", "f"), ("csv:u.csv", "fc"), ("zero", "fz")] {
        run(&["simulate", "--system", "b/manifest.json", "--input", input, "--t-final", "2", "--dt", "0.01", "--out", &format!("{name}.csv")]);
    }
    run(&["simulate", "--system", "r/manifest.json", "--input", "csv:u.csv", "--t-final", "2", "--dt", "0.01", "--out", "rc.csv"]);
    let csv = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,u_1,y_1");
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, 0.0, 0.0]);
    run(&["compare", "--full", "f.csv", "--reduced", "f.csv", "--out", "same.json"]);
    let same: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("same.json")).unwrap()).unwrap();
    assert_eq!(same["aggregate_rel_l2"], 0.0);
    run(&["compare", "--full", "fc.csv", "--reduced", "rc.csv", "--out", "rep.json"]);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    let err = rep["aggregate_rel_l2"].as_f64().unwrap();
    assert!(err < 1e-2, "reduced error {err}");
    let o = run(&["norm", "--system", "b/manifest.json", "--kind", "linear-h2"]);
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(v > 0.0);
}

#[test]
fn scalar_norm_prints_twelve_digits() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("A.mtx"), "%%MatrixMarket matrix array real general\n1 1\n-0.5\n").unwrap();
    fs::write(p.join("B.mtx"), "%%MatrixMarket matrix array real general\n1 1\n1\n").unwrap();
    fs::write(p.join("C.mtx"), "%%MatrixMarket matrix array real general\n1 1\n1\n").unwrap();
    fs::write(
        p.join("m.json"),
        r#"{"type": "ode", "dims": {"n": 1, "m": 1, "p": 1}, "matrices": {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx"}}"#,
    )
    .unwrap();
    for kind in ["truncated-h2", "linear-h2"] {
        let o = qbmor(&["norm", "--system", "m.json", "--kind", kind], p);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1.000000000000");
    }
}

#[test]
fn descriptor_with_b2_is_homogenized_before_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    qbmor(&["gen", "--problem", "synthetic-dae", "--nv", "20", "--np", "4", "--m", "1", "--p", "1", "--out", "d"], p);
    fs::write(p.join("d/B2.mtx"), "%%MatrixMarket matrix array real general\n4 1\n0.3\n-0.2\n0.1\n0.4\n").unwrap();
    let path = p.join("d/manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    manifest["matrices"]["B2"] = "B2.mtx".into();
    fs::write(&path, manifest.to_string()).unwrap();
    let o = qbmor(&["reduce", "--system", "d/manifest.json", "--order", "3", "--seed", "5", "--out", "r"], p);
    assert!(code(&o) == 0 || code(&o) == 3, "{}", stderr(&o));
    let red: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(red["homogenized_inputs"], 1);
    assert_eq!(red["dims"]["m"], 3);
    let o = qbmor(&["simulate", "--system", "r/manifest.json", "--t-final", "1", "--dt", "0.01", "--out", "t.csv"], p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qbmor"))
        .args(["gen", "--problem", "burgers", "--n", "8", "--out", "b"])
        .env("QBMOR_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_qbmor"))
        .args(["gen", "--problem", "burgers", "--n", "8", "--out", "b"])
        .env("QBMOR_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
