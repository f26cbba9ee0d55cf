//! Plan assembly: a TOML plan file (path given by flag or the
//! `SPEECHPOISON_PLAN` environment variable) merged with command-line
//! overrides. Flags mirror plan keys one-to-one and always win.

use std::path::PathBuf;

use clap::Args;

use speechpoison_core::poison::{AttackMode, PoisonPlan, TriggerKind, VsvcPlanConfig};
use speechpoison_core::vsvc::SelectionObjective;
use speechpoison_core::Error as CoreError;

use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct PlanOverrides {
    /// Plan file (TOML). Falls back to $SPEECHPOISON_PLAN.
    #[arg(long, env = "SPEECHPOISON_PLAN")]
    pub plan: Option<PathBuf>,

    /// Trigger kind: pbsm | vsvc.
    #[arg(long)]
    pub trigger: Option<String>,

    /// Attack mode: all-to-one | all-to-all | clean-label.
    #[arg(long)]
    pub mode: Option<String>,

    /// Target labels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<usize>>,

    /// Poisoning rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Keep target-class test samples in the ASR denominator.
    #[arg(long)]
    pub no_exclude_target_class: bool,

    // pbsm.* keys
    #[arg(long)]
    pub semitones: Option<u32>,
    #[arg(long)]
    pub segment_ms: Option<f64>,
    #[arg(long)]
    pub frequency_hz: Option<f64>,
    #[arg(long)]
    pub duration_ms: Option<f64>,
    #[arg(long)]
    pub amplitude_ratio: Option<f64>,
    #[arg(long)]
    pub fade_ms: Option<f64>,

    // vsvc.* keys
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Explicit timbre ids (skips greedy selection), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub timbres: Option<Vec<String>>,
    #[arg(long)]
    pub transform_table: Option<PathBuf>,
    /// Selection objective: max-min | max-sum.
    #[arg(long)]
    pub objective: Option<String>,
    /// External converter command; builtin converter when absent.
    #[arg(long)]
    pub backend_cmd: Option<String>,
}

pub fn parse_objective(text: &str) -> CliResult<SelectionObjective> {
    match text {
        "max-min" | "max_min" => Ok(SelectionObjective::MaxMin),
        "max-sum" | "max_sum" => Ok(SelectionObjective::MaxSum),
        other => Err(CliError::Usage(format!("unknown objective `{other}`"))),
    }
}

fn parse_trigger(text: &str) -> CliResult<TriggerKind> {
    match text {
        "pbsm" => Ok(TriggerKind::Pbsm),
        "vsvc" => Ok(TriggerKind::Vsvc),
        other => Err(CliError::Usage(format!("unknown trigger `{other}`"))),
    }
}

fn parse_mode(text: &str) -> CliResult<AttackMode> {
    match text {
        "all-to-one" | "all_to_one" => Ok(AttackMode::AllToOne),
        "all-to-all" | "all_to_all" => Ok(AttackMode::AllToAll),
        "clean-label" | "clean_label" => Ok(AttackMode::CleanLabel),
        other => Err(CliError::Usage(format!("unknown mode `{other}`"))),
    }
}

impl PlanOverrides {
    /// Merge the plan file (when given) with flag overrides into a validated
    /// plan.
    pub fn resolve(&self) -> CliResult<PoisonPlan> {
        let mut plan = match &self.plan {
            Some(path) => PoisonPlan::load(path).map_err(CliError::Core)?,
            None => {
                let trigger = self
                    .trigger
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("no plan file; --trigger required".into()))?;
                let rates = self
                    .rates
                    .clone()
                    .ok_or_else(|| CliError::Usage("no plan file; --rates required".into()))?;
                PoisonPlan {
                    trigger: parse_trigger(trigger)?,
                    mode: AttackMode::AllToOne,
                    targets: self.targets.clone().unwrap_or_default(),
                    rates,
                    seed: 0,
                    exclude_target_class: true,
                    pbsm: None,
                    vsvc: None,
                }
            }
        };

        if let Some(t) = &self.trigger {
            plan.trigger = parse_trigger(t)?;
        }
        if let Some(m) = &self.mode {
            plan.mode = parse_mode(m)?;
        }
        if let Some(t) = &self.targets {
            plan.targets = t.clone();
        }
        if let Some(r) = &self.rates {
            plan.rates = r.clone();
        }
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if self.no_exclude_target_class {
            plan.exclude_target_class = false;
        }

        if plan.trigger == TriggerKind::Pbsm {
            let pbsm = plan.pbsm.get_or_insert_with(Default::default);
            if let Some(v) = self.semitones {
                pbsm.semitones = v;
            }
            if let Some(v) = self.segment_ms {
                pbsm.segment_ms = v;
            }
            if let Some(v) = self.frequency_hz {
                pbsm.signal.frequency_hz = v;
            }
            if let Some(v) = self.duration_ms {
                pbsm.signal.duration_ms = v;
            }
            if let Some(v) = self.amplitude_ratio {
                pbsm.signal.amplitude_ratio = v;
            }
            if let Some(v) = self.fade_ms {
                pbsm.signal.fade_ms = v;
            }
        }

        if plan.trigger == TriggerKind::Vsvc {
            if plan.vsvc.is_none() {
                let embeddings = self.embeddings.clone().ok_or_else(|| {
                    CliError::Usage("vsvc trigger requires --embeddings or a [vsvc] plan".into())
                })?;
                plan.vsvc = Some(VsvcPlanConfig {
                    embeddings,
                    timbres: None,
                    transform_table: None,
                    objective: SelectionObjective::MaxMin,
                    backend_cmd: None,
                });
            }
            let vsvc = plan.vsvc.as_mut().expect("just ensured");
            if let Some(e) = &self.embeddings {
                vsvc.embeddings = e.clone();
            }
            if let Some(t) = &self.timbres {
                vsvc.timbres = Some(t.clone());
            }
            if let Some(t) = &self.transform_table {
                vsvc.transform_table = Some(t.clone());
            }
            if let Some(o) = &self.objective {
                vsvc.objective = parse_objective(o)?;
            }
            if let Some(b) = &self.backend_cmd {
                vsvc.backend_cmd = Some(b.clone());
            }
        }

        plan.validate().map_err(map_config_to_usage)?;
        Ok(plan)
    }
}

/// Plan-shape problems coming from flag combinations read as usage errors;
/// everything else stays a data error.
fn map_config_to_usage(e: CoreError) -> CliError {
    match e {
        CoreError::Config(msg) => CliError::Usage(msg),
        other => CliError::Core(other),
    }
}
