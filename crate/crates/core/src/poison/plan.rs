//! Attack plans: trigger kind, label mode, per-backdoor targets and rates,
//! and the seed that makes every sampling decision reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pbsm::PbsmConfig;
use crate::vsvc::SelectionObjective;

/// Identifier of the seeded generator used for all subset sampling; recorded
/// in output manifests for cross-platform reproducibility.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Pbsm,
    Vsvc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Every poisoned sample is relabeled to a fixed target.
    AllToOne,
    /// Labels are remapped to `(y + 1) mod K`.
    AllToAll,
    /// Poison only target-class samples; labels stay truthful.
    CleanLabel,
}

/// Timbre-trigger configuration: where the embeddings live and how the
/// selected timbres are converted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsvcPlanConfig {
    pub embeddings: PathBuf,
    /// Explicit timbre ids; skips greedy selection when present.
    #[serde(default)]
    pub timbres: Option<Vec<String>>,
    #[serde(default)]
    pub transform_table: Option<PathBuf>,
    #[serde(default)]
    pub objective: SelectionObjective,
    /// External converter command; builtin converter when absent.
    #[serde(default)]
    pub backend_cmd: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonPlan {
    pub trigger: TriggerKind,
    pub mode: AttackMode,
    /// Target labels, one per backdoor; ignored under `all_to_all`.
    #[serde(default)]
    pub targets: Vec<usize>,
    /// Poisoning rates, one per backdoor.
    pub rates: Vec<f64>,
    pub seed: u64,
    /// Drop target-class test samples from ASR accounting (all-to-one).
    #[serde(default = "default_true")]
    pub exclude_target_class: bool,
    #[serde(default)]
    pub pbsm: Option<PbsmConfig>,
    #[serde(default)]
    pub vsvc: Option<VsvcPlanConfig>,
}

fn default_true() -> bool {
    true
}

impl PoisonPlan {
    /// Number of backdoors.
    pub fn num_backdoors(&self) -> usize {
        self.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rates.len();
        if m == 0 {
            return Err(Error::Config(
                "plan needs at least one poisoning rate".into(),
            ));
        }
        let mut total = 0.0f64;
        for &r in &self.rates {
            if !(r.is_finite() && r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("rate {r} outside (0, 1]")));
            }
            total += r;
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::Config(format!("rates sum to {total}, exceeding 1")));
        }

        match self.mode {
            AttackMode::AllToAll => {
                if m != 1 {
                    return Err(Error::Config(
                        "all_to_all requires exactly one backdoor".into(),
                    ));
                }
            }
            AttackMode::AllToOne | AttackMode::CleanLabel => {
                if self.targets.len() != m {
                    return Err(Error::Config(format!(
                        "{} targets for {m} rates",
                        self.targets.len()
                    )));
                }
                let mut sorted = self.targets.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != m {
                    return Err(Error::Config("targets must be distinct".into()));
                }
            }
        }

        match self.trigger {
            TriggerKind::Pbsm => {
                if m != 1 {
                    return Err(Error::Config(
                        "the pitch trigger carries a single configuration; use one backdoor".into(),
                    ));
                }
            }
            TriggerKind::Vsvc => {
                let cfg = self.vsvc.as_ref().ok_or_else(|| {
                    Error::Config("trigger `vsvc` requires a [vsvc] section".into())
                })?;
                if let Some(timbres) = &cfg.timbres {
                    if timbres.len() != m {
                        return Err(Error::Config(format!(
                            "{} explicit timbres for {m} backdoors",
                            timbres.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that depend on the manifest's class count.
    pub fn validate_against(&self, num_classes: usize) -> Result<()> {
        self.validate()?;
        if self.mode != AttackMode::AllToAll {
            for &t in &self.targets {
                if t >= num_classes {
                    return Err(Error::Config(format!(
                        "target label {t} outside 0..{num_classes}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: PoisonPlan =
            toml::from_str(text).map_err(|e| Error::Config(format!("plan parse error: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Stable hash of the canonicalized plan; changes iff any field changes.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("plan serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// `floor(rate * n)` with protection against values that sit a rounding
/// error below an integer.
pub fn floor_count(rate: f64, n: usize) -> usize {
    let t = rate * n as f64;
    let nearest = t.round();
    if (t - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        t.floor() as usize
    }
}

/// The label a poisoned sample is assigned.
pub fn poison_label(y: usize, mode: AttackMode, target: usize, num_classes: usize) -> usize {
    match mode {
        AttackMode::AllToOne | AttackMode::CleanLabel => target,
        AttackMode::AllToAll => (y + 1) % num_classes,
    }
}
