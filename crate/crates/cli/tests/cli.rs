use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn qobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qobs")).args(args).output().expect("qobs runs")
}

fn small_config(dir: &Path, overrides: Value) -> String {
    let mut cfg = json!({
        "n": 6,
        "solver": {
            "A": 0.2,
            "potential": { "family": "ball_majumdar" },
            "epsilon_schedule": [0.1],
            "grad_tol": 1e-5
        },
        "boundary": {
            "kind": "uniaxial",
            "s": 0.4,
            "director": { "type": "twist", "axis": "y", "pitch": 0.25 }
        }
    });
    merge(&mut cfg, overrides);
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[test]
fn formulas_table() {
    let out = qobs(&["formulas", "--a", "0.3,-0.3", "--s", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# qobs "));
    assert_eq!(lines[1], "A,p,s_of_a,q_max,branch,dim_basic,dim_improved");
    let row: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(row[0], "0.3");
    assert!((row[1].parse::<f64>().unwrap() - 31.0).abs() < 1e-12);
    assert_eq!(lines.len(), 4);

    let out = qobs(&["formulas", "--range", "0.5:1.5:3"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
}

#[test]
fn formulas_reject_out_of_range_a() {
    let out = qobs(&["formulas", "--a", "-0.7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("-0.7"));
}

#[test]
fn invalid_anisotropy_fails_validation_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "solver": { "A": -0.7 } }));
    let out_dir = dir.path().join("out");
    let out = qobs(&["minimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_configs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    for patch in [
        json!({ "unknown_field": 1 }),
        json!({ "boundary": { "s": 0.99 } }),
        json!({ "solver": { "epsilon_schedule": [0.01, 0.1] } }),
        json!({ "n": 2 }),
    ] {
        let cfg = small_config(dir.path(), patch.clone());
        let out = qobs(&["minimize", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{patch}");
    }
    assert_eq!(qobs(&["minimize"]).status.code(), Some(2));
}

#[test]
fn minimize_writes_stamped_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out_dir = dir.path().join("run");
    let out = qobs(&["minimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(summary["converged"].as_bool().unwrap());
    assert!(summary["min_distance"]["distance"].as_f64().unwrap() > 0.0);
    for csv in ["trace.csv", "scaling.csv"] {
        let text = std::fs::read_to_string(out_dir.join(csv)).unwrap();
        assert!(text.starts_with(&format!("# qobs {} config {hash}\n", env!("CARGO_PKG_VERSION"))));
    }
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("field.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config_hash"], hash);
    let bytes = std::fs::read(out_dir.join("field.qobs")).unwrap();
    assert_eq!(bytes.len(), 12 + 6 * 6 * 6 * 40);
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "solver": { "max_iters": 2, "grad_tol": 1e-12 } }));
    let out = qobs(&["minimize", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], false);
}

#[test]
fn seed_controls_the_perturbed_initial_guess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "perturbation": 0.02 }));
    let run = |seed: &str, name: &str| {
        let d = dir.path().join(name);
        assert!(qobs(&["minimize", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", seed]).status.success());
        std::fs::read(d.join("trace.csv")).unwrap()
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "kind": "sweep", "sweep": { "axis": "A", "values": [0.0, 0.5] } }));
    let out_dir = dir.path().join("sweep");
    let out = qobs(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("A,0e0,true,"));

    let cfg = small_config(
        dir.path(),
        json!({ "kind": "sweep", "sweep": { "axis": "epsilon", "values": [0.1, 0.01, 0.001] } }),
    );
    let out = qobs(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let increments: Vec<f64> = text.lines().skip(3).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(increments.len(), 2);
    assert!(increments[1] < increments[0]);
}

#[test]
fn single_point_sweep_matches_minimize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({ "kind": "sweep", "sweep": { "axis": "A", "values": [0.2] } }));
    let out = qobs(&["sweep", "--config", &cfg, "--out", dir.path().join("s").to_str().unwrap()]);
    assert!(out.status.success());
    let out = qobs(&["minimize", "--config", &cfg, "--out", dir.path().join("m").to_str().unwrap()]);
    assert!(out.status.success());
    let sweep = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let energy: f64 = sweep.lines().nth(2).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m/summary.json")).unwrap()).unwrap();
    assert_eq!(energy, summary["energy"]["total"].as_f64().unwrap());
}

#[test]
fn check_potential_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("pot.json");
    std::fs::write(&spec, r#"{"family":"inverse_power","s":1.5,"m":2.0}"#).unwrap();
    let out = qobs(&["check-potential", "--config", spec.to_str().unwrap(), "--samples", "400"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let g = &report["growth"]["growth"];
    assert!((g["m_s"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((g["big_m_s"].as_f64().unwrap() - 2.0).abs() < 1e-9);

    std::fs::write(&spec, r#"{"family":"inverse_power","s":-1.0,"m":2.0}"#).unwrap();
    let out = qobs(&["check-potential", "--config", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_field_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let out = qobs(&["synth", "--n", "48", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!((summary["scaling"]["beta"].as_f64().unwrap() - 3.0).abs() < 0.15);
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qobs(&["verify", "--level", "quick", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["passed"] == true && c["slack"].as_f64().unwrap() >= 0.0));
}

#[test]
fn bundled_configs_match_the_schema() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(root.join("docs/schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(root.join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", path.display());
        seen += 1;
    }
    assert!(seen >= 2);
    let bad = json!({ "n": 8, "solver": { "A": -0.7 }, "boundary": { "kind": "constant_tensor", "q": [0, 0, 0, 0, 0] } });
    assert!(!validator.is_valid(&bad));
}
