//! Self-describing policy snapshots.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Hash of the experiment configuration that produced the weights.
    pub config_hash: String,
    pub seed: u64,
    pub iteration: usize,
    /// `stage1`, `protagonist` or `adversary`.
    pub role: String,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if !ckpt.params.is_finite() {
            return Err(Error::CheckpointMismatch(format!("{} holds non-finite weights", path.display())));
        }
        Ok(ckpt)
    }

    /// Fails unless the snapshot fits a state of `input_len` and `heads`
    /// heads of `classes` classes.
    pub fn check_shape(&self, input_len: usize, heads: usize, classes: usize) -> Result<()> {
        let p = &self.params;
        if p.input_len() != input_len || p.heads != heads || p.classes != classes {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint expects {} inputs and {}x{} outputs, environment needs {input_len} and {heads}x{classes}",
                p.input_len(),
                p.heads,
                p.classes
            )));
        }
        Ok(())
    }
}
