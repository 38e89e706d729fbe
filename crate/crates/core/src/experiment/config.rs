//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constellation::ConstellationSpec;
use crate::env::{EnvConfig, Platform, RequestMode};
use crate::error::{Error, Result};
use crate::learn::TrainConfig;
use crate::routing::RoutingConfig;
use crate::workload::{AppSpec, RequestScenario, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TrainStage1,
    TrainStage2,
    Evaluate,
    Baseline,
    GameCheck,
    Reproduce,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::TrainStage1,
        Mode::TrainStage2,
        Mode::Evaluate,
        Mode::Baseline,
        Mode::GameCheck,
        Mode::Reproduce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TrainStage1 => "train-stage1",
            Mode::TrainStage2 => "train-stage2",
            Mode::Evaluate => "evaluate",
            Mode::Baseline => "baseline",
            Mode::GameCheck => "game-check",
            Mode::Reproduce => "reproduce",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
            Error::InvalidConfig(format!("unknown mode `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

/// Fixed core placement, inline or as a JSON file written by `train-stage1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSection {
    #[serde(default)]
    pub placement: Option<Vec<Vec<u32>>>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_timing_repetitions() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_request_mode")]
    pub request_mode: RequestMode,
    /// Protagonist checkpoint.
    #[serde(default)]
    pub protagonist: Option<PathBuf>,
    /// Adversary checkpoint, used in adversarial request mode.
    #[serde(default)]
    pub adversary: Option<PathBuf>,
    #[serde(default = "default_timing_repetitions")]
    pub timing_repetitions: usize,
}

fn default_request_mode() -> RequestMode {
    RequestMode::Nominal
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            request_mode: default_request_mode(),
            protagonist: None,
            adversary: None,
            timing_repetitions: default_timing_repetitions(),
        }
    }
}

fn default_game_count() -> usize {
    100
}
fn default_game_dim() -> usize {
    8
}
fn default_eval_seeds() -> Vec<u64> {
    (0..8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    #[serde(default = "default_game_count")]
    pub count: usize,
    #[serde(default = "default_game_dim")]
    pub max_dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Protagonist snapshots for an empirical game; needs the platform sections.
    #[serde(default)]
    pub protagonists: Vec<PathBuf>,
    #[serde(default)]
    pub adversaries: Vec<PathBuf>,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: Vec<u64>,
}

impl Default for GameSection {
    fn default() -> Self {
        Self {
            count: default_game_count(),
            max_dim: default_game_dim(),
            seed: 0,
            protagonists: Vec::new(),
            adversaries: Vec::new(),
            eval_seeds: default_eval_seeds(),
        }
    }
}

fn default_scenario_names() -> Vec<String> {
    ["fig6", "fig7", "fig7-second", "fig5", "fig8-9", "fig10", "timing"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceSection {
    /// Bundle entries to run; `timing` selects the decision-latency grid.
    #[serde(default = "default_scenario_names")]
    pub scenarios: Vec<String>,
    #[serde(default = "default_timing_repetitions")]
    pub timing_repetitions: usize,
}

impl Default for ReproduceSection {
    fn default() -> Self {
        Self {
            scenarios: default_scenario_names(),
            timing_repetitions: default_timing_repetitions(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Seed list; falls back to `train.seeds`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub constellation: Option<ConstellationSpec>,
    #[serde(default)]
    pub app: Option<AppSpec>,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub core: CoreSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub reproduce: ReproduceSection,
}

/// Turns a parse error into a message naming the file, line and column.
fn diagnose(path: &Path, text: &str, err: &toml::de::Error) -> Error {
    let location = err
        .span()
        .map(|span| {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("{}:{line}:{column}", path.display())
        })
        .unwrap_or_else(|| path.display().to_string());
    Error::InvalidConfig(format!("{location}: {}", err.message()))
}

impl ExperimentConfig {
    /// Parses a TOML document; relative paths stay relative to the caller.
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::parse(Path::new("<config>"), text)
    }

    /// Reads a TOML file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(path, &text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| diagnose(path, text, &e))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(f) = self.core.file.as_mut() {
            fix(f);
        }
        if let Some(f) = self.evaluate.protagonist.as_mut() {
            fix(f);
        }
        if let Some(f) = self.evaluate.adversary.as_mut() {
            fix(f);
        }
        self.game.protagonists.iter_mut().for_each(fix);
        self.game.adversaries.iter_mut().for_each(fix);
    }

    pub fn seeds(&self) -> &[u64] {
        self.seeds.as_deref().unwrap_or(&self.train.seeds)
    }

    /// Checks that the sections the mode needs are present and that every
    /// referenced file exists.
    pub fn validate(&self) -> Result<()> {
        if self.seeds().is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        self.train.validate()?;
        if let Some(env) = &self.env {
            env.validate()?;
        }
        let need = |present: bool, section: &str| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "mode `{}` requires the [{section}] section",
                    self.mode
                )))
            }
        };
        let platform = |cfg: &Self| -> Result<()> {
            need(cfg.constellation.is_some(), "constellation")?;
            need(cfg.app.is_some(), "app")?;
            need(cfg.env.is_some(), "env")
        };
        let core = |cfg: &Self| need(cfg.core.placement.is_some() || cfg.core.file.is_some(), "core");
        match self.mode {
            Mode::TrainStage1 => platform(self)?,
            Mode::TrainStage2 | Mode::Baseline => {
                platform(self)?;
                need(self.scenario.is_some(), "scenario")?;
                core(self)?;
            }
            Mode::Evaluate => {
                platform(self)?;
                need(self.scenario.is_some(), "scenario")?;
                core(self)?;
                if self.evaluate.protagonist.is_none() {
                    return Err(Error::InvalidConfig(
                        "mode `evaluate` requires evaluate.protagonist".into(),
                    ));
                }
                if self.evaluate.request_mode == RequestMode::Adversarial && self.evaluate.adversary.is_none() {
                    return Err(Error::InvalidConfig(
                        "adversarial evaluation requires evaluate.adversary".into(),
                    ));
                }
                if self.evaluate.timing_repetitions == 0 {
                    return Err(Error::InvalidConfig("evaluate.timing_repetitions must be positive".into()));
                }
            }
            Mode::GameCheck => {
                if self.game.count == 0 || self.game.max_dim == 0 {
                    return Err(Error::InvalidConfig("game.count and game.max_dim must be positive".into()));
                }
                if !self.game.protagonists.is_empty() || !self.game.adversaries.is_empty() {
                    platform(self)?;
                    need(self.scenario.is_some(), "scenario")?;
                    core(self)?;
                }
            }
            Mode::Reproduce => {
                let known = default_scenario_names();
                if let Some(bad) = self.reproduce.scenarios.iter().find(|s| !known.contains(s)) {
                    return Err(Error::InvalidConfig(format!(
                        "unknown reproduction scenario `{bad}`, expected one of {}",
                        known.join(", ")
                    )));
                }
                if self.reproduce.timing_repetitions == 0 {
                    return Err(Error::InvalidConfig("reproduce.timing_repetitions must be positive".into()));
                }
            }
        }
        let mut files: Vec<&PathBuf> = Vec::new();
        files.extend(&self.core.file);
        if self.mode == Mode::Evaluate {
            files.extend(&self.evaluate.protagonist);
            files.extend(&self.evaluate.adversary);
        }
        if self.mode == Mode::GameCheck {
            files.extend(&self.game.protagonists);
            files.extend(&self.game.adversaries);
        }
        if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
            return Err(Error::InvalidConfig(format!(
                "referenced file {} does not exist",
                missing.display()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Builds the platform from the constellation, app and env sections;
    /// scenario chains, when given, replace the app's chains.
    pub fn platform(&self) -> Result<Arc<Platform>> {
        let missing = |s: &str| Error::InvalidConfig(format!("missing [{s}] section"));
        let graph = self.constellation.as_ref().ok_or_else(|| missing("constellation"))?.build()?;
        let mut app = self.app.clone().ok_or_else(|| missing("app"))?;
        if let Some(chains) = self.scenario.as_ref().and_then(|s| s.chains.clone()) {
            app.chains = chains;
        }
        let env = self.env.ok_or_else(|| missing("env"))?;
        Ok(Arc::new(Platform::new(graph, app.build()?, self.routing, env)?))
    }

    pub fn request_scenario(&self, regions: usize) -> Result<RequestScenario> {
        self.scenario
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("missing [scenario] section".into()))?
            .build(regions)
    }

    /// Core placement from the inline section or the referenced file.
    pub fn core_placement(&self) -> Result<Vec<Vec<u32>>> {
        match (&self.core.placement, &self.core.file) {
            (Some(p), None) => Ok(p.clone()),
            (None, Some(f)) => Ok(serde_json::from_str(&std::fs::read_to_string(f)?)?),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(
                "core section takes either `placement` or `file`, not both".into(),
            )),
            (None, None) => Err(Error::InvalidConfig("missing [core] section".into())),
        }
    }
}
