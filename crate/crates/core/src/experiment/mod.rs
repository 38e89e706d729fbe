//! Experiment runner: configuration, dispatch to the run modes, manifests
//! and CSV output.

pub mod bundle;
pub mod config;
pub mod manifest;
pub mod reproduce;
pub mod tables;
pub mod timing;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{CoreSection, EvaluateSection, ExperimentConfig, GameSection, Mode, ReproduceSection};
pub use manifest::{Hardware, RunManifest, RunStatus, Timing, CSV_SCHEMA_VERSION};
pub use reproduce::{
    default_env_config, reference_platform, reproduction_platform, FigureData, ReproduceReport, Series, TimingResult,
};
pub use tables::Tables;
pub use timing::{measure_decision_latency, LatencyStats, DECISION_BUDGET_MS};

use crate::env::{Platform, RequestMode, Stage1Env, Stage2Env};
use crate::error::{Error, Result};
use crate::game::{check_game, empirical_game, random_games, write_report_csv, GameCheck};
use crate::learn::{
    evaluate_policy, evaluate_schedule, hpa_baseline, robust_hpa_baseline, train_msrarl, train_stage1, train_vanilla,
    Checkpoint, PolicyParams,
};

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
    pub reproduce: Option<ReproduceReport>,
    pub games: Vec<GameCheck>,
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    out: &'a Path,
    hash: String,
    manifest: RunManifest,
    reproduce: Option<ReproduceReport>,
    games: Vec<GameCheck>,
}

/// Validates the config, writes a manifest, runs the mode and rewrites the
/// manifest with outputs, timings and final status.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let out = config.output_dir.as_path();
    std::fs::create_dir_all(out)?;
    let hash = config.hash()?;
    let manifest = RunManifest::new(hash.clone(), config.mode, config.seeds().to_vec());
    manifest.save(out)?;
    let mut run = Run {
        config,
        out,
        hash,
        manifest,
        reproduce: None,
        games: Vec::new(),
    };
    let started = Instant::now();
    let result = run.dispatch().and_then(|()| {
        if run.manifest.infeasible_schedules > 0 {
            Err(Error::Infeasible(format!(
                "{} emitted light slots failed the feasibility check",
                run.manifest.infeasible_schedules
            )))
        } else {
            Ok(())
        }
    });
    run.manifest.timings.push(Timing {
        label: "total".into(),
        seconds: started.elapsed().as_secs_f64(),
    });
    match &result {
        Ok(()) => run.manifest.status = RunStatus::Complete,
        Err(e) => {
            run.manifest.status = RunStatus::Failed;
            run.manifest.error = Some(e.to_string());
        }
    }
    run.manifest.save(out)?;
    result?;
    Ok(RunSummary {
        output_dir: out.to_path_buf(),
        manifest: run.manifest,
        reproduce: run.reproduce,
        games: run.games,
    })
}

impl Run<'_> {
    fn dispatch(&mut self) -> Result<()> {
        match self.config.mode {
            Mode::TrainStage1 => self.train_stage1(),
            Mode::TrainStage2 => self.train_stage2(),
            Mode::Evaluate => self.evaluate(),
            Mode::Baseline => self.baseline(),
            Mode::GameCheck => self.game_check(),
            Mode::Reproduce => self.reproduce(),
        }
    }

    fn time(&mut self, label: String, started: Instant) {
        self.manifest.timings.push(Timing {
            label,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    fn write_seed_tables(&mut self, seed: u64, tables: &Tables) -> Result<()> {
        let rel = format!("seed-{seed}");
        for name in tables.write(&self.out.join(&rel))? {
            self.manifest.outputs.push(format!("{rel}/{name}"));
        }
        self.manifest.infeasible_schedules += tables.infeasible;
        Ok(())
    }

    fn save_checkpoint(&mut self, seed: u64, name: &str, role: &str, params: &PolicyParams) -> Result<()> {
        let rel = format!("seed-{seed}/checkpoints/{name}-{role}.json");
        Checkpoint {
            config_hash: self.hash.clone(),
            seed,
            iteration: self.config.train.iterations,
            role: role.into(),
            params: params.clone(),
        }
        .save(&self.out.join(&rel))?;
        self.manifest.outputs.push(rel);
        Ok(())
    }

    fn stage2_env(&self, platform: &Arc<Platform>, mode: RequestMode) -> Result<Stage2Env> {
        let scenario = self.config.scenario.as_ref().expect("validated scenario section");
        Stage2Env::new(
            platform.clone(),
            self.config.core_placement()?,
            self.config.request_scenario(platform.satellites())?,
            scenario.phi,
            scenario.slot_duration_ms,
            mode,
        )
    }

    fn train_stage1(&mut self) -> Result<()> {
        let platform = self.config.platform()?;
        let train = &self.config.train;
        let results: Vec<_> = self
            .config
            .seeds()
            .par_iter()
            .map(|&seed| {
                let started = Instant::now();
                let mut env = Stage1Env::new(platform.clone())?;
                train_stage1(&mut env, train, seed).map(|r| (seed, r, started))
            })
            .collect::<Result<_>>()?;
        for (seed, result, started) in results {
            self.time(format!("seed-{seed}/train-stage1"), started);
            let mut tables = Tables::default();
            tables.record_core("stage1", seed, &platform, &result.core);
            tables.record_curve("stage1", seed, &result.curve);
            self.write_seed_tables(seed, &tables)?;
            self.save_checkpoint(seed, "core", "stage1", &result.policy)?;
            let rel = format!("seed-{seed}/core.json");
            crate::io::write_atomic(&self.out.join(&rel), serde_json::to_string(&result.core)?.as_bytes())?;
            self.manifest.outputs.push(rel);
        }
        Ok(())
    }

    fn train_stage2(&mut self) -> Result<()> {
        let platform = self.config.platform()?;
        let request_mode = self.config.evaluate.request_mode;
        let env = self.stage2_env(&platform, request_mode)?;
        let core = env.core().to_vec();
        let adversarial = env.phi() > 0;
        let name = if adversarial { "msrarl" } else { "vanilla" };
        let train = &self.config.train;
        let results: Vec<_> = self
            .config
            .seeds()
            .par_iter()
            .map(|&seed| {
                let started = Instant::now();
                let trained = if adversarial {
                    train_msrarl(&env, train, seed)?
                } else {
                    train_vanilla(&env, train, seed)?
                };
                let eval = evaluate_policy(&env, &trained.protagonist, trained.adversary.as_ref(), seed)?;
                Ok((seed, trained, eval, started))
            })
            .collect::<Result<_>>()?;
        for (seed, trained, eval, started) in results {
            self.time(format!("seed-{seed}/train-stage2"), started);
            if let Some(reason) = &trained.diverged {
                return Err(Error::Divergence(format!("seed {seed}: {reason}")));
            }
            let mut tables = Tables::default();
            tables.record_curve(name, seed, &trained.curve);
            tables.record_phase_schedule(name, seed, &trained.schedule);
            tables.record_evaluation(name, seed, &platform, &core, &eval)?;
            self.write_seed_tables(seed, &tables)?;
            self.save_checkpoint(seed, name, "protagonist", &trained.protagonist)?;
            if let Some(adv) = &trained.adversary {
                self.save_checkpoint(seed, name, "adversary", adv)?;
            }
        }
        Ok(())
    }

    fn load_policy(path: &Path, role: &str, input_len: usize, heads: usize, classes: usize) -> Result<PolicyParams> {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.role != role {
            return Err(Error::CheckpointMismatch(format!(
                "{} holds a {} snapshot, expected {role}",
                path.display(),
                ckpt.role
            )));
        }
        ckpt.check_shape(input_len, heads, classes)?;
        Ok(ckpt.params)
    }

    fn load_protagonist(env: &Stage2Env, path: &Path) -> Result<PolicyParams> {
        let d = env.platform().satellites();
        let classes = env.platform().env.max_copies as usize + 1;
        Self::load_policy(path, "protagonist", env.protagonist_state_len(), d, classes)
    }

    fn load_adversary(env: &Stage2Env, path: &Path) -> Result<PolicyParams> {
        let d = env.platform().satellites();
        let classes = 2 * env.phi() as usize + 1;
        Self::load_policy(path, "adversary", env.adversary_state_len(), d, classes)
    }

    fn evaluate(&mut self) -> Result<()> {
        let platform = self.config.platform()?;
        let section = &self.config.evaluate;
        let env = self.stage2_env(&platform, section.request_mode)?;
        let protagonist = Self::load_protagonist(&env, section.protagonist.as_deref().expect("validated"))?;
        let adversary = section
            .adversary
            .as_deref()
            .map(|p| Self::load_adversary(&env, p))
            .transpose()?;
        let core = env.core().to_vec();
        for &seed in self.config.seeds() {
            let started = Instant::now();
            let eval = evaluate_policy(&env, &protagonist, adversary.as_ref(), seed)?;
            self.time(format!("seed-{seed}/evaluate"), started);
            let mut tables = Tables::default();
            tables.record_evaluation("evaluate", seed, &platform, &core, &eval)?;
            self.write_seed_tables(seed, &tables)?;
        }
        let stats = measure_decision_latency(&env, &protagonist, section.timing_repetitions)?;
        let mut tables = Tables::default();
        tables.timing.push(tables::TimingRow {
            label: "policy".into(),
            light: env.light_count(),
            satellites: platform.satellites(),
            repetitions: stats.samples_ms.len(),
            mean_ms: stats.mean_ms,
            p95_ms: stats.p95_ms,
            max_ms: stats.max_ms,
        });
        self.manifest.outputs.extend(tables.write(self.out)?);
        Ok(())
    }

    fn baseline(&mut self) -> Result<()> {
        let platform = self.config.platform()?;
        let env = self.stage2_env(&platform, self.config.evaluate.request_mode)?;
        let core = env.core().to_vec();
        let started = Instant::now();
        let hpa = hpa_baseline(&platform, &core, env.scenario())?;
        let robust = robust_hpa_baseline(&platform, &core, env.scenario(), env.phi())?;
        self.time("baselines".into(), started);
        for &seed in self.config.seeds() {
            let mut tables = Tables::default();
            for (name, schedule) in [("hpa", &hpa), ("robust-hpa", &robust)] {
                let eval = evaluate_schedule(&env, schedule, seed)?;
                tables.record_evaluation(name, seed, &platform, &core, &eval)?;
            }
            self.write_seed_tables(seed, &tables)?;
        }
        Ok(())
    }

    fn game_check(&mut self) -> Result<()> {
        let section = &self.config.game;
        let started = Instant::now();
        let checks = random_games(section.count, section.max_dim, section.seed)
            .iter()
            .enumerate()
            .map(|(i, g)| check_game(i, g))
            .collect::<Result<Vec<_>>>()?;
        self.time("game-check".into(), started);
        let mut bytes = Vec::new();
        write_report_csv(&checks, &mut bytes)?;
        crate::io::write_atomic(&self.out.join("game_report.csv"), &bytes)?;
        self.manifest.outputs.push("game_report.csv".into());
        self.games = checks;

        if !section.protagonists.is_empty() || !section.adversaries.is_empty() {
            let platform = self.config.platform()?;
            let env = self.stage2_env(&platform, RequestMode::Adversarial)?;
            let prots = section
                .protagonists
                .iter()
                .map(|p| Self::load_protagonist(&env, p))
                .collect::<Result<Vec<_>>>()?;
            let advs = section
                .adversaries
                .iter()
                .map(|p| Self::load_adversary(&env, p))
                .collect::<Result<Vec<_>>>()?;
            let (game, _) = empirical_game(&prots, &advs, &env, &section.eval_seeds)?;
            let check = check_game(self.games.len(), &game)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["protagonist", "adversary", "payoff"])?;
            for (i, row) in game.payoff.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
                }
            }
            let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
            crate::io::write_atomic(&self.out.join("empirical_game.csv"), &bytes)?;
            let mut report = Vec::new();
            write_report_csv(std::slice::from_ref(&check), &mut report)?;
            crate::io::write_atomic(&self.out.join("empirical_game_report.csv"), &report)?;
            self.manifest.outputs.push("empirical_game.csv".into());
            self.manifest.outputs.push("empirical_game_report.csv".into());
            self.games.push(check);
        }
        Ok(())
    }

    fn reproduce(&mut self) -> Result<()> {
        let env = self.config.env.unwrap_or_else(default_env_config);
        let platform = reproduction_platform(env, self.config.routing)?;
        let reproduction = reproduce::Reproduction {
            platform,
            train: &self.config.train,
            selected: &self.config.reproduce.scenarios,
            timing_repetitions: self.config.reproduce.timing_repetitions,
            config_hash: &self.hash,
        };
        let started = Instant::now();
        let mut written = Vec::new();
        let report = reproduction.run(self.config.seeds(), self.out, &mut written)?;
        self.time("reproduce".into(), started);
        self.manifest.timings.push(Timing {
            label: "training".into(),
            seconds: report.training_seconds,
        });
        self.manifest.outputs.extend(written);
        self.manifest.infeasible_schedules += report.infeasible_slots;
        let summary = serde_json::to_string_pretty(&report)?;
        crate::io::write_atomic(&self.out.join("report.json"), summary.as_bytes())?;
        self.manifest.outputs.push("report.json".into());
        self.reproduce = Some(report);
        Ok(())
    }
}
