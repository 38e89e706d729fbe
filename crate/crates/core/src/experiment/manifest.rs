//! Run manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::error::Result;

/// Version of every CSV column layout written by the runner.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl Hardware {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub csv_schema_version: u32,
    pub artifact_version: String,
    pub config_hash: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub status: RunStatus,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
    pub timings: Vec<Timing>,
    pub hardware: Hardware,
    /// Emitted light slots that failed the feasibility check.
    pub infeasible_schedules: usize,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config_hash: String, mode: Mode, seeds: Vec<u64>) -> Self {
        Self {
            csv_schema_version: CSV_SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            mode,
            seeds,
            status: RunStatus::Running,
            outputs: Vec::new(),
            timings: Vec::new(),
            hardware: Hardware::detect(),
            infeasible_schedules: 0,
            error: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::io::write_atomic(&dir.join("manifest.json"), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
    }
}
