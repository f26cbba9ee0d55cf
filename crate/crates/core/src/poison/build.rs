//! Subset sampling and poisoned-corpus construction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{load_wav, save_wav, AudioClip};
use crate::error::{Error, FileFailure, Result};
use crate::pbsm::{apply_pbsm_detailed, apply_pitch_only, PbsmConfig};
use crate::poison::manifest::{DatasetManifest, PoisonedEntry, PoisonedManifest, Subset};
use crate::poison::plan::{
    floor_count, poison_label, AttackMode, PoisonPlan, TriggerKind, RNG_ALGORITHM,
};
use crate::vsvc::{
    assign_transforms, convert_voice, greedy_select_with, load_embeddings, load_transform_table,
    similarity_matrix, ConversionBackend, TimbreTransform,
};

/// Index partition of a manifest: `poisoned[i]` holds the rows of the
/// `i+1`-th poisoned subset, everything else is benign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub benign: Vec<usize>,
    pub poisoned: Vec<Vec<usize>>,
}

/// Deterministically split the manifest into one benign and `M` pairwise
/// disjoint poisoned subsets of `floor(rate_i * N)` rows each.
pub fn sample_poison_subsets(manifest: &DatasetManifest, plan: &PoisonPlan) -> Result<Partition> {
    plan.validate_against(manifest.num_classes)?;
    let n = manifest.len();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut taken = vec![false; n];
    let mut poisoned = Vec::with_capacity(plan.num_backdoors());

    match plan.mode {
        AttackMode::CleanLabel => {
            for (i, &rate) in plan.rates.iter().enumerate() {
                let size = floor_count(rate, n);
                let mut candidates: Vec<usize> = (0..n)
                    .filter(|&idx| !taken[idx] && manifest.entries[idx].label == plan.targets[i])
                    .collect();
                if candidates.len() < size {
                    return Err(Error::Capacity(format!(
                        "target class {} has {} available samples, need {size}",
                        plan.targets[i],
                        candidates.len()
                    )));
                }
                candidates.shuffle(&mut rng);
                let subset: Vec<usize> = candidates.into_iter().take(size).collect();
                for &idx in &subset {
                    taken[idx] = true;
                }
                poisoned.push(subset);
            }
        }
        AttackMode::AllToOne | AttackMode::AllToAll => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut cursor = 0usize;
            for &rate in &plan.rates {
                let size = floor_count(rate, n);
                let subset: Vec<usize> = order[cursor..cursor + size].to_vec();
                cursor += size;
                for &idx in &subset {
                    taken[idx] = true;
                }
                poisoned.push(subset);
            }
        }
    }

    let benign: Vec<usize> = (0..n).filter(|&idx| !taken[idx]).collect();
    Ok(Partition { benign, poisoned })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    /// Record per-file failures and keep building instead of failing the run.
    pub keep_going: bool,
}

/// Which rendition of the pitch trigger an attack test set carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestsetVariant {
    Full,
    /// Pitch boost only, no injected tone (trigger-filtering ablation).
    PitchOnly,
}

enum TriggerApplier {
    Pbsm {
        cfg: PbsmConfig,
        variant: TestsetVariant,
    },
    Vsvc {
        transforms: Vec<TimbreTransform>,
    },
}

impl TriggerApplier {
    fn apply(&self, clip: &AudioClip, backdoor: usize) -> Result<(AudioClip, serde_json::Value)> {
        match self {
            TriggerApplier::Pbsm { cfg, variant } => match variant {
                TestsetVariant::Full => {
                    let outcome = apply_pbsm_detailed(clip, cfg)?;
                    let meta = serde_json::json!({
                        "trigger": "pbsm",
                        "variant": "full",
                        "semitones": cfg.semitones,
                        "segment_ms": cfg.segment_ms,
                        "frequency_hz": cfg.signal.frequency_hz,
                        "duration_ms": cfg.signal.duration_ms,
                        "amplitude_ratio": cfg.signal.amplitude_ratio,
                        "insertion_index": outcome.insertion_index,
                        "peak_overage": outcome.peak_overage,
                    });
                    Ok((outcome.output, meta))
                }
                TestsetVariant::PitchOnly => {
                    let output = apply_pitch_only(clip, cfg)?;
                    let meta = serde_json::json!({
                        "trigger": "pbsm",
                        "variant": "pitch_only",
                        "semitones": cfg.semitones,
                    });
                    Ok((output, meta))
                }
            },
            TriggerApplier::Vsvc { transforms } => {
                let t = &transforms[backdoor - 1];
                let output = convert_voice(clip, t)?;
                let meta = serde_json::json!({
                    "trigger": "vsvc",
                    "timbre_id": t.timbre_id,
                    "warp_alpha": t.warp_alpha,
                    "pitch_offset_semitones": t.pitch_offset_semitones,
                    "backend": match &t.backend {
                        ConversionBackend::Builtin => "builtin".to_string(),
                        ConversionBackend::External { command } => command.clone(),
                    },
                });
                Ok((output, meta))
            }
        }
    }
}

fn prepare_applier(plan: &PoisonPlan, variant: TestsetVariant) -> Result<TriggerApplier> {
    match plan.trigger {
        TriggerKind::Pbsm => Ok(TriggerApplier::Pbsm {
            cfg: plan.pbsm.clone().unwrap_or_default(),
            variant,
        }),
        TriggerKind::Vsvc => {
            if variant == TestsetVariant::PitchOnly {
                return Err(Error::InvalidInput(
                    "the pitch_only variant applies to the pbsm trigger only".into(),
                ));
            }
            let cfg = plan.vsvc.as_ref().expect("validated vsvc plan has config");
            let embeddings = load_embeddings(&cfg.embeddings)?;
            let m = plan.num_backdoors();

            let selected: Vec<String> = match &cfg.timbres {
                Some(explicit) => {
                    for id in explicit {
                        if !embeddings.speaker_ids.contains(id) {
                            return Err(Error::Config(format!(
                                "timbre `{id}` not present in {}",
                                cfg.embeddings.display()
                            )));
                        }
                    }
                    explicit.clone()
                }
                None => {
                    let sim = similarity_matrix(&embeddings);
                    if m == 1 {
                        // A single backdoor still seeds from the most
                        // distant pair; its first element is the pick.
                        let pair = greedy_select_with(&sim, 2, cfg.objective)?;
                        vec![pair[0].clone()]
                    } else {
                        greedy_select_with(&sim, m, cfg.objective)?
                    }
                }
            };

            let slots = match &cfg.transform_table {
                Some(path) => Some(load_transform_table(path)?),
                None => None,
            };
            let backend = match &cfg.backend_cmd {
                Some(command) => ConversionBackend::External {
                    command: command.clone(),
                },
                None => ConversionBackend::Builtin,
            };
            let transforms = assign_transforms(&selected, slots.as_deref(), &backend)?;
            Ok(TriggerApplier::Vsvc { transforms })
        }
    }
}

fn target_for(plan: &PoisonPlan, backdoor: usize) -> usize {
    match plan.mode {
        AttackMode::AllToAll => 0,
        _ => plan.targets[backdoor - 1],
    }
}

struct PoisonJob {
    entry_index: usize,
    backdoor: usize,
    out_id: String,
}

fn run_jobs(
    manifest: &DatasetManifest,
    plan: &PoisonPlan,
    applier: &TriggerApplier,
    jobs: Vec<PoisonJob>,
    out_dir: &Path,
) -> (Vec<(usize, PoisonedEntry)>, Vec<FileFailure>) {
    let results: Vec<std::result::Result<(usize, PoisonedEntry), FileFailure>> = jobs
        .par_iter()
        .map(|job| {
            let entry = &manifest.entries[job.entry_index];
            let fail = |message: String| FileFailure {
                sample_id: entry.sample_id.clone(),
                path: entry.path.to_string_lossy().into_owned(),
                message,
            };
            let clip = load_wav(&entry.path).map_err(|e| fail(e.to_string()))?;
            let (output, meta) = applier
                .apply(&clip, job.backdoor)
                .map_err(|e| fail(e.to_string()))?;
            let out_path = out_dir.join(format!("{}.wav", job.out_id));
            save_wav(&output, &out_path).map_err(|e| fail(e.to_string()))?;
            let target = target_for(plan, job.backdoor);
            let row = PoisonedEntry {
                sample_id: job.out_id.clone(),
                path: out_path,
                label: poison_label(entry.label, plan.mode, target, manifest.num_classes),
                ground_truth: entry.label,
                subset: Subset::Poisoned(job.backdoor),
                excluded_from_asr: plan.mode != AttackMode::AllToAll
                    && plan.exclude_target_class
                    && entry.label == target,
                trigger_meta: Some(meta),
            };
            Ok((job.entry_index, row))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    (rows, failures)
}

/// Build the training dataset: poisoned rows get triggered WAVs written
/// under `out_dir` (named `<sample_id>__p<i>.wav`) and remapped labels;
/// benign rows reference their source files untouched. Byte-deterministic
/// for a fixed (manifest, plan, out_dir).
pub fn build_poisoned_dataset(
    manifest: &DatasetManifest,
    plan: &PoisonPlan,
    out_dir: impl AsRef<Path>,
    options: &BuildOptions,
) -> Result<(PoisonedManifest, Vec<FileFailure>)> {
    let out_dir = out_dir.as_ref();
    let partition = sample_poison_subsets(manifest, plan)?;
    let applier = prepare_applier(plan, TestsetVariant::Full)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut backdoor_of = vec![0usize; manifest.len()];
    for (i, subset) in partition.poisoned.iter().enumerate() {
        for &idx in subset {
            backdoor_of[idx] = i + 1;
        }
    }

    let jobs: Vec<PoisonJob> = (0..manifest.len())
        .filter(|&idx| backdoor_of[idx] != 0)
        .map(|idx| PoisonJob {
            entry_index: idx,
            backdoor: backdoor_of[idx],
            out_id: format!("{}__p{}", manifest.entries[idx].sample_id, backdoor_of[idx]),
        })
        .collect();
    let (poisoned_rows, failures) = run_jobs(manifest, plan, &applier, jobs, out_dir);
    if !failures.is_empty() && !options.keep_going {
        return Err(Error::Build { failures });
    }

    // Poisoned rows keep their source sample id so the subsets partition the
    // corpus id-set exactly.
    let mut by_entry: std::collections::HashMap<usize, PoisonedEntry> = poisoned_rows
        .into_iter()
        .map(|(idx, mut row)| {
            row.sample_id = manifest.entries[idx].sample_id.clone();
            (idx, row)
        })
        .collect();

    let mut entries = Vec::with_capacity(manifest.len());
    for (idx, entry) in manifest.entries.iter().enumerate() {
        if backdoor_of[idx] == 0 {
            entries.push(PoisonedEntry {
                sample_id: entry.sample_id.clone(),
                path: entry.path.clone(),
                label: entry.label,
                ground_truth: entry.label,
                subset: Subset::Benign,
                excluded_from_asr: false,
                trigger_meta: None,
            });
        } else if let Some(row) = by_entry.remove(&idx) {
            entries.push(row);
        }
        // Failed poisoned entries are dropped from the manifest; the failure
        // list carries them.
    }

    Ok((
        PoisonedManifest {
            entries,
            num_classes: manifest.num_classes,
            rng_algorithm: RNG_ALGORITHM.into(),
            seed: plan.seed,
        },
        failures,
    ))
}

/// Build the attack test set: every row of `test_manifest` is triggered once
/// per backdoor (ids and files suffixed `__p<i>`), labeled with the plan's
/// target mapping, and flagged `excluded_from_asr` when its ground truth
/// already equals the target.
pub fn build_attack_testset(
    test_manifest: &DatasetManifest,
    plan: &PoisonPlan,
    variant: TestsetVariant,
    out_dir: impl AsRef<Path>,
    options: &BuildOptions,
) -> Result<(PoisonedManifest, Vec<FileFailure>)> {
    let out_dir = out_dir.as_ref();
    plan.validate_against(test_manifest.num_classes)?;
    let applier = prepare_applier(plan, variant)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut jobs = Vec::with_capacity(test_manifest.len() * plan.num_backdoors());
    for backdoor in 1..=plan.num_backdoors() {
        for (idx, entry) in test_manifest.entries.iter().enumerate() {
            jobs.push(PoisonJob {
                entry_index: idx,
                backdoor,
                out_id: format!("{}__p{backdoor}", entry.sample_id),
            });
        }
    }
    let (rows, failures) = run_jobs(test_manifest, plan, &applier, jobs, out_dir);
    if !failures.is_empty() && !options.keep_going {
        return Err(Error::Build { failures });
    }
    let rows: Vec<PoisonedEntry> = rows.into_iter().map(|(_, row)| row).collect();

    Ok((
        PoisonedManifest {
            entries: rows,
            num_classes: test_manifest.num_classes,
            rng_algorithm: RNG_ALGORITHM.into(),
            seed: plan.seed,
        },
        failures,
    ))
}
