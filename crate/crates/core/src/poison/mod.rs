//! Dataset orchestration: deterministic poison-subset sampling, label
//! mapping, poisoned-corpus writing, and attack test-set generation.

mod build;
mod manifest;
mod plan;

pub use build::{
    build_attack_testset, build_poisoned_dataset, sample_poison_subsets, BuildOptions, Partition,
    TestsetVariant,
};
pub use manifest::{
    load_manifest, load_poisoned_manifest, DatasetManifest, ManifestEntry, PoisonedEntry,
    PoisonedManifest, Subset,
};
pub use plan::{
    floor_count, poison_label, AttackMode, PoisonPlan, TriggerKind, VsvcPlanConfig, RNG_ALGORITHM,
};
