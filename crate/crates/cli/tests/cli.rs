use std::process::{Command, Output};

use serde_json::Value;

fn cproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cproj")).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn verify_projective_model() {
    let out = cproj(&["verify", "--model", "cpm:m=2,p=1,q=0", "--samples", "60"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    let checks = r["checks"].as_array().unwrap();
    let res = checks.iter().find(|c| c["name"] == "metrizability_residual").unwrap();
    assert!(res["measured"].as_f64().unwrap() < 1e-10);
}

#[test]
fn verify_flat_model_is_exact() {
    let out = cproj(&["verify", "--model", "flat:m=2,sig=2,0", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    for c in r["checks"].as_array().unwrap() {
        if c["name"] == "metrizability_residual" || c["name"] == "normality_defect" {
            assert_eq!(c["measured"], 0.0);
        }
    }
}

#[test]
fn usage_errors() {
    for args in [
        vec!["verify", "--model", "cpm:m=2,p=1,q=0", "--resolution", "1"],
        vec!["stratify", "--model", "cpm:m=2,p=1,q=0", "--box", "2:-2"],
        vec!["verify", "--model", "cpm:m=2,p=1,q=0", "--tol-alg", "-1"],
        vec!["verify", "--model", "nope:m=2"],
        vec!["verify"],
        vec!["calibrate", "--model", "flat:m=2,sig=2,0", "--format", "xml"],
    ] {
        let out = cproj(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn assertion_failure_exits_one() {
    let out = cproj(&["verify", "--model", "cpm:m=2,p=1,q=0", "--samples", "20", "--tol-alg", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
}

#[test]
fn non_solution_chart_is_a_hypothesis_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chart.toml");
    std::fs::write(&path, "m = 2\n[zeta]\n\"0,0\" = \"1 + x0^2\"\n\"1,1\" = \"1 + x0^2\"\n").unwrap();
    let out = cproj(&["stratify", "--input", path.to_str().unwrap(), "--resolution", "3"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stratify_agrees_with_oracle_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |p: &std::path::Path| {
        vec![
            "stratify".to_string(),
            "--model".into(),
            "cpm:m=2,p=1,q=0".into(),
            "--resolution".into(),
            "8,8,8,3".into(),
            "--cr-limit".into(),
            "4".into(),
            "--out".into(),
            p.display().to_string(),
        ]
    };
    for p in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_cproj")).args(args(p)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ra, rb);
    let r: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(r["oracle_agreement"], 1.0);
    let counts = r["summary"]["counts"].as_object().unwrap();
    let total: u64 = counts.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 8 * 8 * 8 * 3);
    assert!(r["summary"]["m0_points"].as_u64().unwrap() > 0);
    for rec in r["m0"].as_array().unwrap() {
        if !rec["cr"].is_null() {
            assert!((rec["cr"]["theta_t"].as_f64().unwrap() - 1.0).abs() < 1e-8);
            assert_eq!(rec["cr"]["levi_signature"], serde_json::json!([1, 0]));
        }
    }
}

#[test]
fn definite_model_has_no_hypersurface() {
    let out = cproj(&["stratify", "--model", "cpm:m=2,p=3,q=0", "--resolution", "6,6,6,3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["summary"]["m0_points"], 0);
    assert_eq!(r["summary"]["counts"]["minus"], 6 * 6 * 6 * 3);
    let out = cproj(&["stratify", "--model", "cpm:m=2,p=2,q=2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cproj(&["stratify", "--model", "cpm:m=2,p=1,q=0", "--box", "-0.3:0.3", "--resolution", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["summary"]["counts"]["minus"], 256);
}

#[test]
fn csv_points() {
    let out = cproj(&["stratify", "--model", "flat:m=2,sig=1,1", "--resolution", "2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x0,x1,x2,x3,label,p,q,r,tau,residual");
    assert_eq!(lines.count(), 16);
}

#[test]
fn calibrate_reports_kappa() {
    let out = cproj(&["calibrate", "--model", "cpm:m=2,p=1,q=0", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!((r["kappa"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-8);
}
