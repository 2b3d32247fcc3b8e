use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nctorus"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nctorus-harness-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(kind: &str, config: &Path, out: &Path) -> i32 {
    let status = bin()
        .args([kind, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .status()
        .unwrap();
    status.code().unwrap()
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn laplacian_spectrum_matches_lattice() {
    let dir = scratch("spectrum");
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0.25], [-0.25, 0]], "cutoff": 4, "operator": "d1^2+d2^2", "seed": 3}"#,
    );
    let out = dir.join("out");
    assert_eq!(run("spectrum", &cfg, &out), 0);
    let mut rdr = csv::Reader::from_path(out.join("spectrum.csv")).unwrap();
    let mut got: Vec<f64> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            assert!(r[2].parse::<f64>().unwrap().abs() < 1e-10);
            r[1].parse::<f64>().unwrap()
        })
        .collect();
    assert_eq!(got.len(), 81);
    let mut expect: Vec<f64> = (-4i32..=4)
        .flat_map(|a| (-4i32..=4).map(move |b| f64::from(a * a + b * b)))
        .collect();
    got.sort_by(f64::total_cmp);
    expect.sort_by(f64::total_cmp);
    for (g, e) in got.iter().zip(&expect) {
        assert!((g - e).abs() < 1e-10, "{g} vs {e}");
    }
    let rep = report(&out);
    assert_eq!(rep["kind"], "spectrum");
    assert_eq!(rep["config_hash"].as_str().unwrap().len(), 64);
    assert!(rep["library_version"].is_string());
    assert!(rep["tolerances"]["cluster_rel"].is_number());
    assert_eq!(rep["status"], "ok");
}

#[test]
fn invalid_theta_is_a_validation_error_without_outputs() {
    let dir = scratch("theta");
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0.25], [0.25, 0]], "cutoff": 4, "operator": "d1^2+d2^2"}"#,
    );
    let out = dir.join("out");
    assert_eq!(run("spectrum", &cfg, &out), 1);
    assert!(!out.exists());
}

#[test]
fn bad_cutoff_and_kind_mismatch_are_validation_errors() {
    let dir = scratch("cutoff");
    let cfg = write_config(&dir, r#"{"theta": [[0, 0], [0, 0]], "cutoff": 1, "operator": "d1"}"#);
    assert_eq!(run("spectrum", &cfg, &dir.join("a")), 1);
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0], [0, 0]], "cutoff": 3, "operator": "d1", "kind": "abs"}"#,
    );
    assert_eq!(run("spectrum", &cfg, &dir.join("b")), 1);
    let cfg = write_config(&dir, r#"{"theta": [[0, 0], [0, 0]], "cutoff": 3, "operator": "d1 +* U1"}"#);
    assert_eq!(run("spectrum", &cfg, &dir.join("c")), 1);
}

#[test]
fn compose_check_is_exact_and_deterministic() {
    let dir = scratch("compose");
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0.7071067811865476], [-0.7071067811865476, 0]], "cutoff": 6, "margin": 2,
            "seed": 11, "params": {"pairs": 4}}"#,
    );
    let a = dir.join("a");
    let b = dir.join("b");
    assert_eq!(run("compose-check", &cfg, &a), 0);
    assert_eq!(run("compose-check", &cfg, &b), 0);
    let ca = std::fs::read(a.join("compose.csv")).unwrap();
    let cb = std::fs::read(b.join("compose.csv")).unwrap();
    assert_eq!(ca, cb);
    let mut rdr = csv::Reader::from_reader(ca.as_slice());
    for r in rdr.records() {
        let r = r.unwrap();
        assert!(r[3].parse::<f64>().unwrap() <= 1e-10);
        assert!(r[4].parse::<f64>().unwrap() <= 1e-10);
    }
    assert_eq!(report(&a)["config_hash"], report(&b)["config_hash"]);
}

#[test]
fn numerical_failure_exits_two_with_report() {
    let dir = scratch("branch");
    // spectrum on the negative axis: no principal branch of the power
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0.25], [-0.25, 0]], "cutoff": 3, "operator": "-(d1^2 + d2^2) - 1",
            "params": {"z": [0.5, 0], "symbol": false}}"#,
    );
    let out = dir.join("out");
    assert_eq!(run("power", &cfg, &out), 2);
    assert_eq!(report(&out)["status"], "numerical_failure");
}

#[test]
fn operator_file_and_phi_check() {
    let dir = scratch("phi");
    std::fs::write(dir.join("op.txt"), "d1^2 + d2^2 + 1\n").unwrap();
    let cfg = write_config(
        &dir,
        r#"{"theta": [[0, 0.25], [-0.25, 0]], "cutoff": 3, "operator_file": "op.txt"}"#,
    );
    assert_eq!(run("abs", &cfg, &dir.join("abs")), 0);
    assert_eq!(run("phi-check", &cfg, &dir.join("phi")), 0);
    let rep = report(&dir.join("phi"));
    assert_eq!(rep["checks"].as_array().unwrap().len(), 4);
}
