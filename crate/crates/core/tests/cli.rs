use std::process::Command;

fn lbddnn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lbddnn"))
}

#[test]
fn list_presets_names_every_preset() {
    let out = lbddnn().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in lbddnn::experiment::PRESET_NAMES {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn run_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = lbddnn()
        .args(["--seed", "3", "--duration", "0.2", "--out-dir"])
        .arg(dir.path())
        .args(["run", "--preset", "dropout-default"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("dropout-default_seed3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
    assert!(dir.path().join("dropout-default_seed3.metrics.json").exists());
}

#[test]
fn run_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.json");
    std::fs::write(
        &cfg,
        r#"{"name": "custom", "mode": "baseline", "duration": 0.1, "gains": {"k_e": 5.0, "k_s": 1.0}}"#,
    )
    .unwrap();
    let out = lbddnn()
        .arg("--out-dir")
        .arg(dir.path())
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("custom_seed0.csv").exists());
}

#[test]
fn bad_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    let out = lbddnn().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = lbddnn().args(["run", "--preset", "no-such-preset"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_json_with_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = lbddnn()
        .args(["--duration", "0.2", "--out-dir"])
        .arg(dir.path())
        .args(["sweep", "--presets", "baseline,dropout-default", "--seeds", "0,1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["sweeps"].as_array().unwrap().len(), 2);
    assert_eq!(json["comparisons"][0]["candidate"], "dropout-default");
}

#[test]
fn quick_verify_passes_and_writes_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = lbddnn().arg("--out-dir").arg(dir.path()).args(["verify", "--quick"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches("[PASS]").count(), 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
}
