use std::process::{Command, Output};

fn martin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_martin")).args(args).output().expect("martin runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn help_and_usage_errors() {
    let out = martin(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("spine-scan"));
    assert_eq!(martin(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(martin(&["green", "--tolerance", "3"]).status.code(), Some(64));
}

#[test]
fn malformed_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"seed\": 1,\n  \"samples\": \"lots\"\n}\n").unwrap();
    let out = martin(&["harmonic", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("samples") && err.contains("line 3"), "{err}");

    std::fs::write(&cfg, r#"{"walk": "srw-free:2", "radious": 3}"#).unwrap();
    let out = martin(&["green", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radious"));
}

#[test]
fn spine_scan_drifted_z() {
    let out = martin(&["spine-scan", "--walk", "drift-z:0.7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let best = &r["scans"][0];
    assert_eq!(best["label"], "+inf");
    assert_eq!(best["isSpine"], true);
    assert!(best["maxDev"].as_f64().unwrap() < 1e-3);
    assert_eq!(r["scans"][1]["isSpine"], false);
}

#[test]
fn recurrent_walk_is_resource_error() {
    let out = martin(&["green", "--walk", "drift-z:0.5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn green_and_martin_on_the_tree() {
    let r = json(&martin(&["green"]));
    assert!((r["value"].as_f64().unwrap() - 1.5).abs() < 1e-5);
    assert_eq!(r["methods_agree"], true);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.json");
    std::fs::write(&cfg, r#"{"boundary": "end:abab", "elements": ["a", "A", "ab", "bb"]}"#).unwrap();
    let r = json(&martin(&["martin", "--config", cfg.to_str().unwrap()]));
    let values: Vec<f64> = r["rows"].as_array().unwrap().iter().map(|x| x["value"].as_f64().unwrap()).collect();
    for (v, exact) in values.iter().zip([3.0, 1.0 / 3.0, 9.0, 1.0 / 9.0]) {
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
    }
}

#[test]
fn report_files_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let cfg = dir.path().join("h.json");
    std::fs::write(&cfg, r#"{"samples": 20000, "depth": 1, "seed": 7}"#).unwrap();
    let args = ["harmonic", "--config", cfg.to_str().unwrap(), "--format", "csv", "--out", out.to_str().unwrap()];
    assert_eq!(martin(&args).status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cyl,mass,se"));
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "harmonic");

    let again = dir.path().join("h2.csv");
    let args = [
        "harmonic",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
        "--workers",
        "3",
        "--out",
        again.to_str().unwrap(),
    ];
    assert_eq!(martin(&args).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn kms_detects_wrong_beta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.json");
    std::fs::write(&cfg, r#"{"words": 5, "betas": [2.0], "samples": 20000}"#).unwrap();
    assert_eq!(martin(&["kms", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"words": 5, "betas": [1.0], "samples": 20000}"#).unwrap();
    assert_eq!(martin(&["kms", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn conformal_and_product_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"samples": 20000, "words": 5}"#).unwrap();
    let r = json(&martin(&["conformal", "--config", cfg.to_str().unwrap()]));
    assert_eq!(r["verdict"], "C");
    for key in ["spine", "residuals", "phi", "kms"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    let r = json(&martin(&["conformal", "--walk", "drift-z:0.7", "--config", cfg.to_str().unwrap()]));
    assert_eq!(r["verdict"], "A");
    assert_eq!(r["spectrum"]["admissible"], "all real beta");

    let r = json(&martin(&["product", "--config", cfg.to_str().unwrap()]));
    assert_eq!(r["massOk"], true);
    assert_eq!(r["phiMap"]["conformal"], true);
}
