use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use leo_deploy::experiment::{run, ExperimentConfig, Mode, RunManifest, RunStatus, CSV_SCHEMA_VERSION};
use leo_deploy::learn::TrainConfig;
use leo_deploy::Error;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&config_path(name)).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.train = TrainConfig {
        iterations: 2,
        epochs: 1,
        episodes_per_round: 2,
        update_passes: 2,
        hidden: vec![16],
        ..TrainConfig::default()
    };
    cfg.seeds = Some(vec![0, 1]);
    cfg
}

/// Every CSV under `dir` except wall-clock timing tables.
fn csv_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut found = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") && !path.ends_with("timing.csv") {
                found.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    found
}

#[test]
fn parse_errors_report_line_and_column() {
    let text = "mode = \"baseline\"\nseeds = [0,\n  \"x\"]\n";
    let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
    assert!(err.contains("<config>:3:3"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "mode = \"game-check\"\nunknown_key = 1\n").unwrap();
    let err = ExperimentConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("bad.toml:2:1"), "{err}");
    assert!(err.contains("unknown_key"), "{err}");
}

#[test]
fn unknown_modes_list_the_valid_ones() {
    let err = "train".parse::<Mode>().unwrap_err().to_string();
    for mode in Mode::ALL {
        assert!(err.contains(mode.as_str()), "{err}");
        assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
    }
    assert!(ExperimentConfig::from_toml("mode = \"train\"\n").is_err());
}

#[test]
fn missing_sections_and_files_fail_validation() {
    let cfg = ExperimentConfig::from_toml("mode = \"baseline\"\n").unwrap();
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("[constellation]"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::load(&config_path("evaluate.toml")).unwrap();
    cfg.evaluate.protagonist = Some(dir.path().join("absent.json"));
    let err = cfg.validate().unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
    assert!(err.to_string().contains("absent.json"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    for name in [
        "reproduce.toml",
        "game-check.toml",
        "train-stage1.toml",
        "train-stage2.toml",
        "baseline.toml",
        "evaluate.toml",
    ] {
        let cfg = ExperimentConfig::load(&config_path(name)).unwrap();
        assert!(!cfg.seeds().is_empty(), "{name}");
        assert!(cfg.hash().unwrap().len() == 64);
    }
}

#[test]
fn game_check_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load("game-check.toml", dir.path());
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.games.len(), 100);
    assert!(summary.games.iter().all(|g| g.passed()));
    let manifest = RunManifest::load(dir.path()).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);
    assert_eq!(manifest.csv_schema_version, CSV_SCHEMA_VERSION);
    assert_eq!(manifest.config_hash, cfg.hash().unwrap());
    assert!(manifest.outputs.iter().any(|o| o == "game_report.csv"));
    assert!(manifest.timings.iter().any(|t| t.label == "total"));
    assert!(manifest.hardware.logical_cpus >= 1);
    let report = std::fs::read_to_string(dir.path().join("game_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 101);
}

#[test]
fn baseline_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&load("baseline.toml", a.path())).unwrap();
    run(&load("baseline.toml", b.path())).unwrap();
    let first = csv_contents(a.path());
    assert!(first.keys().any(|k| k.ends_with("deployments.csv")));
    assert_eq!(first, csv_contents(b.path()));
}

#[test]
fn staged_pipeline_trains_evaluates_and_reruns_identically() {
    let root = tempfile::tempdir().unwrap();
    let stage1 = root.path().join("stage1");
    let summary = run(&load("train-stage1.toml", &stage1)).unwrap();
    assert!(stage1.join("seed-0/core.json").exists());
    assert!(summary.manifest.outputs.iter().any(|o| o == "seed-1/checkpoints/core-stage1.json"));

    let stage2 = root.path().join("stage2");
    let again = root.path().join("stage2-again");
    run(&load("train-stage2.toml", &stage2)).unwrap();
    run(&load("train-stage2.toml", &again)).unwrap();
    let first = csv_contents(&stage2);
    for table in ["curves.csv", "schedule_log.csv", "slots.csv", "costs.csv"] {
        assert!(first.keys().any(|k| k.ends_with(table)), "missing {table}");
    }
    assert_eq!(first, csv_contents(&again));

    let slots = std::fs::read_to_string(stage2.join("seed-0/slots.csv")).unwrap();
    assert!(slots.lines().skip(1).all(|l| l.ends_with("true")), "{slots}");

    let mut eval = load("evaluate.toml", &root.path().join("eval"));
    eval.seeds = Some(vec![0]);
    eval.evaluate.protagonist = Some(stage2.join("seed-0/checkpoints/msrarl-protagonist.json"));
    eval.evaluate.adversary = Some(stage2.join("seed-0/checkpoints/msrarl-adversary.json"));
    eval.evaluate.timing_repetitions = 3;
    let summary = run(&eval).unwrap();
    assert_eq!(summary.manifest.status, RunStatus::Complete);
    assert!(root.path().join("eval/timing.csv").exists());

    // Swapped roles fail the shape check.
    std::mem::swap(&mut eval.evaluate.protagonist, &mut eval.evaluate.adversary);
    eval.output_dir = root.path().join("eval-swapped");
    let err = run(&eval).unwrap_err();
    assert!(matches!(err, Error::CheckpointMismatch(_)), "{err}");
    let manifest = RunManifest::load(&root.path().join("eval-swapped")).unwrap();
    assert_eq!(manifest.status, RunStatus::Failed);
    assert!(manifest.error.is_some());
}
