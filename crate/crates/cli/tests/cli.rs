use std::path::Path;
use std::process::Command;

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn leo_deploy() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leo-deploy"))
}

#[test]
fn game_check_run_succeeds() {
    let out = tempfile::tempdir().unwrap();
    let output = leo_deploy()
        .args(["run", "--config"])
        .arg(configs().join("game-check.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&output.stderr));
    assert!(stdout.contains("games checked: 100, failures: 0"), "{stdout}");
    assert!(out.path().join("manifest.json").exists());
    assert!(out.path().join("game_report.csv").exists());
}

#[test]
fn invalid_mode_exits_non_zero() {
    let output = leo_deploy()
        .args(["run", "--config"])
        .arg(configs().join("game-check.toml"))
        .args(["--mode", "train"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown mode `train`"), "{stderr}");
}

#[test]
fn missing_config_exits_non_zero() {
    let output = leo_deploy()
        .args(["run", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error: "));
}

#[test]
fn seed_override_limits_the_run() {
    let out = tempfile::tempdir().unwrap();
    let output = leo_deploy()
        .args(["run", "--config"])
        .arg(configs().join("baseline.toml"))
        .args(["--seed", "7", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.path().join("seed-7").is_dir());
    assert!(!out.path().join("seed-0").exists());
}
