//! Per-run provenance sidecar written next to every built dataset.

use std::path::Path;

use serde::Serialize;

use speechpoison_core::poison::{PoisonPlan, RNG_ALGORITHM};
use speechpoison_core::{Error as CoreError, FileFailure};

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: Vec<String>,
    pub tool_version: String,
    pub plan_digest: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub started_at: String,
    pub finished_at: String,
    pub errors: Vec<FileFailure>,
}

impl RunRecord {
    pub fn begin(plan: &PoisonPlan) -> Self {
        Self {
            command: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            plan_digest: plan.digest(),
            seed: plan.seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
            errors: Vec::new(),
        }
    }

    pub fn finish(mut self, errors: Vec<FileFailure>, dir: &Path) -> Result<(), CoreError> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        self.errors = errors;
        let path = dir.join("run_record.json");
        let text =
            serde_json::to_string_pretty(&self).map_err(|e| CoreError::Format(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CoreError::io(path, e))
    }
}
