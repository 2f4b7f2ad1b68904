use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn emc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emc"))
        .args(args)
        .output()
        .expect("spawn emc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn list_systems_json() {
    let out = emc(&["list-systems", "--json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<_> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(
        names,
        ["rigid_body", "lagrange_top", "symmetric_oscillator", "harmonic_s1"]
    );
}

#[test]
fn certify_exit_codes_follow_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let major = dir.path().join("major.json");
    let out = emc(&[
        "certify",
        "rigid_body",
        "--I",
        "1,2,3",
        "--at",
        "0,0,1",
        "--output",
        major.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json_file(&major);
    assert_eq!(doc["verdict"], "CertifiedStable");
    assert_eq!(doc["params"]["I"], serde_json::json!([1.0, 2.0, 3.0]));
    assert_eq!(doc["config"]["system"], "rigid_body");

    let out = emc(&["certify", "rigid_body", "--at", "0,1,0"]);
    assert_eq!(code(&out), 2);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["verdict"], "Inconclusive_Indefinite");
}

#[test]
fn certify_is_deterministic() {
    let args = ["certify", "lagrange_top", "--known", "sleeping", "--omega", "2.5"];
    let a = emc(&args);
    let b = emc(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors_exit_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.json");
    let t = target.to_str().unwrap();

    let out = emc(&["certify", "double_pendulum", "--at", "1", "--output", t]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("lagrange_top"), "{}", stderr(&out));

    let out = emc(&["certify", "rigid_body", "--I", "1,-2,3", "--at", "1,0,0", "--output", t]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("invalid parameter I"));

    let out = emc(&["certify", "rigid_body", "--radius", "2", "--at", "1,0,0", "--output", t]);
    assert_eq!(code(&out), 1);

    let out = emc(&["certify", "rigid_body", "--at", "1,0", "--output", t]);
    assert_eq!(code(&out), 1);

    let out = emc(&["certify", "rigid_body", "--at", "0.3,0.4,0.5", "--output", t]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not a relative equilibrium"));

    let out = emc(&["certify", "rigid_body", "--bogus"]);
    assert_eq!(code(&out), 1);

    assert!(!target.exists());
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&emc(&["--help"])), 0);
    assert_eq!(code(&emc(&["--version"])), 0);
    assert_eq!(code(&emc(&["certify", "--help"])), 0);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
system = "symmetric_oscillator"
known = "circular"
[params]
radius = 2.0
[experiment]
deltas = [1e-3]
samples_per_delta = 2
t_final = 2.0
step = 0.01
"#,
    )
    .unwrap();
    let out_path = dir.path().join("exp.json");
    let out = emc(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--t-final",
        "1",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json_file(&out_path);
    assert_eq!(doc["verdict"], "consistent_with_stable");
    assert_eq!(doc["options"]["t_final"], 1.0);
    assert_eq!(doc["options"]["samples_per_delta"], 2);
    assert_eq!(doc["params"]["radius"], serde_json::json!([2.0]));
    assert_eq!(doc["z_e"], serde_json::json!([2.0, 0.0, 0.0, 0.0, 2.0, 0.0]));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "sytem = \"rigid_body\"\n").unwrap();
    let out = emc(&["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn certify_verify_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let exp = dir.path().join("exp.json");
    let csv = dir.path().join("series.csv");
    let out = emc(&[
        "certify",
        "lagrange_top",
        "--known",
        "sleeping",
        "--output",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = emc(&[
        "verify",
        "--certificate",
        cert.to_str().unwrap(),
        "--deltas",
        "1e-3",
        "--samples",
        "2",
        "--t-final",
        "2",
        "--step",
        "0.01",
        "--csv",
        csv.to_str().unwrap(),
        "--output",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json_file(&exp);
    assert_eq!(doc["certificate_verdict"], "CertifiedStable");
    assert_eq!(doc["ls3_violations"], 0);
    let series = std::fs::read_to_string(&csv).unwrap();
    let mut lines = series.lines();
    assert_eq!(lines.next(), Some("delta,sample,t,orbit_distance,f"));
    assert!(lines.count() > 10);

    let out = emc(&[
        "report",
        "--certificate",
        cert.to_str().unwrap(),
        "--experiment",
        exp.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("CertifiedStable") && text.contains("consistent_with_stable"),
        "{text}"
    );
}

#[test]
fn verify_rejects_certificate_for_other_system() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    assert_eq!(
        code(&emc(&[
            "certify",
            "rigid_body",
            "--at",
            "0,0,1",
            "--output",
            cert.to_str().unwrap()
        ])),
        0
    );
    let out = emc(&[
        "verify",
        "lagrange_top",
        "--certificate",
        cert.to_str().unwrap(),
        "--samples",
        "1",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn check_structure_and_find_re() {
    let out = emc(&["check-structure", "lagrange_top", "--samples", "4", "--rng-seed", "7"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);

    let out = emc(&["find-re", "rigid_body", "--seed", "0.1,0.05,0.98"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["residual_norm"].as_f64().unwrap() <= 1e-9);
    let z: Vec<f64> = serde_json::from_value(v["z_e"].clone()).unwrap();
    assert!(z[0].abs() < 1e-6 && z[1].abs() < 1e-6 && z[2] > 0.9);
}

#[test]
fn simulate_writes_csv() {
    let out = emc(&[
        "simulate",
        "harmonic_s1",
        "--at",
        "1,0",
        "--t-final",
        "0.1",
        "--step",
        "0.01",
        "--stride",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "t,z1,z2");
    assert_eq!(lines.len(), 4);
}
