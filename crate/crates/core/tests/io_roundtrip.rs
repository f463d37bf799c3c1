use std::fs;

use qbmor_core::io::{load_system, read_matrix_market, save_dae, save_ode, LoadedSystem};
use qbmor_core::problems::{gen_burgers, gen_synthetic_dae, SyntheticDaeConfig};

#[test]
fn burgers_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_burgers(16, 0.1, 7).unwrap();
    let path = save_ode(&sys, dir.path()).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["A.mtx", "B.mtx", "C.mtx", "H.mtx", "manifest.json"]);
    match load_system(&path).unwrap() {
        LoadedSystem::Ode(back) => assert_eq!(back, sys),
        other => panic!("expected an ODE, got {other:?}"),
    }
}

#[test]
fn descriptor_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_synthetic_dae(&SyntheticDaeConfig {
        with_c2: true,
        ..Default::default()
    })
    .unwrap();
    let path = save_dae(&sys, dir.path()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"type\": \"dae\""));
    match load_system(&path).unwrap() {
        LoadedSystem::Dae(back) => assert_eq!(back, sys),
        other => panic!("expected a DAE, got {other:?}"),
    }
}

#[test]
fn dimension_clash_names_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let sys = gen_synthetic_dae(&SyntheticDaeConfig::default()).unwrap();
    let path = save_dae(&sys, dir.path()).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("\"n_v\": 30", "\"n_v\": 31");
    fs::write(&path, text).unwrap();
    let msg = load_system(&path).unwrap_err().to_string();
    assert!(msg.contains("31") && msg.contains("30"), "{msg}");
}

#[test]
fn malformed_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.mtx");
    fs::write(&p, "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1.0 0.0\n").unwrap();
    assert!(read_matrix_market(&p).unwrap_err().to_string().contains("unsupported field"));
    fs::write(&p, "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n").unwrap();
    assert!(read_matrix_market(&p).unwrap_err().to_string().contains("0-based"));
    let missing = dir.path().join("nope.json");
    assert!(load_system(&missing).is_err());
}
