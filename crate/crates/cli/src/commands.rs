//! Subcommand implementations.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use speechpoison_core::audio::{dominant_frequency, load_wav, save_wav};
use speechpoison_core::eval::{
    attack_success_rate, benign_accuracy, load_predictions, render_report, MetricsReport,
    ReportFormat,
};
use speechpoison_core::pbsm::apply_pbsm_detailed;
use speechpoison_core::poison::{
    build_attack_testset, build_poisoned_dataset, load_manifest, load_poisoned_manifest,
    BuildOptions, Subset, TestsetVariant, TriggerKind,
};
use speechpoison_core::vsvc::{
    convert_voice, greedy_select_with, load_embeddings, similarity_matrix, ConversionBackend,
    TimbreTransform,
};
use speechpoison_core::Error as CoreError;

use crate::overrides::{parse_objective, PlanOverrides};
use crate::record::RunRecord;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct TriggerArgs {
    /// Apply the pitch trigger.
    #[arg(long, conflicts_with = "vsvc")]
    pbsm: bool,
    /// Apply the timbre trigger (builtin converter unless --backend-cmd).
    #[arg(long)]
    vsvc: bool,

    /// Timbre id for --vsvc.
    #[arg(long)]
    timbre: Option<String>,
    /// Spectral-envelope warp factor for --vsvc.
    #[arg(long, default_value_t = 1.1)]
    warp_alpha: f64,
    /// Pitch offset in semitones for --vsvc.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pitch_offset: i32,

    #[command(flatten)]
    overrides: PlanOverrides,

    input: PathBuf,
    output: PathBuf,
}

pub fn cmd_trigger(args: TriggerArgs) -> CliResult<()> {
    let clip = load_wav(&args.input)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    if args.vsvc {
        let timbre = args
            .timbre
            .clone()
            .ok_or_else(|| CliError::Usage("--vsvc requires --timbre".into()))?;
        let backend = match &args.overrides.backend_cmd {
            Some(cmd) => ConversionBackend::External {
                command: cmd.clone(),
            },
            None => ConversionBackend::Builtin,
        };
        let transform = TimbreTransform {
            timbre_id: timbre,
            warp_alpha: args.warp_alpha,
            pitch_offset_semitones: args.pitch_offset,
            backend,
        };
        let converted = convert_voice(&clip, &transform)?;
        save_wav(&converted, &args.output)?;
        let _ = writeln!(out, "timbre_id={}", transform.timbre_id);
        let _ = writeln!(out, "warp_alpha={}", transform.warp_alpha);
        return Ok(());
    }

    // Default to the pitch trigger; assemble its config from plan + flags.
    let mut overrides = args.overrides.clone();
    overrides.trigger = Some("pbsm".into());
    if overrides.plan.is_none() && overrides.rates.is_none() {
        overrides.rates = Some(vec![1.0]);
        overrides.targets = Some(vec![0]);
    }
    let plan = overrides.resolve()?;
    let cfg = plan.pbsm.clone().unwrap_or_default();

    let outcome = apply_pbsm_detailed(&clip, &cfg)?;
    save_wav(&outcome.output, &args.output)?;

    let f_in = dominant_frequency(&clip);
    let f_out = dominant_frequency(&outcome.output);
    let ratio = if f_in > 0.0 { f_out / f_in } else { 0.0 };
    let _ = writeln!(out, "pitch_ratio={ratio:.4}");
    let _ = writeln!(out, "insertion_index={}", outcome.insertion_index);
    let _ = writeln!(out, "peak_overage={:.6}", outcome.peak_overage);
    Ok(())
}

#[derive(Args)]
pub struct SelectTimbresArgs {
    /// Speaker-embedding CSV (`id,v0,...`).
    embeddings: PathBuf,
    /// Number of timbres to select.
    m: usize,

    /// Selection objective: max-min | max-sum.
    #[arg(long, default_value = "max-min")]
    objective: String,

    /// Write the similarity matrix as CSV ("-" for stdout).
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

pub fn cmd_select_timbres(args: SelectTimbresArgs) -> CliResult<()> {
    let embeddings = load_embeddings(&args.embeddings)?;
    let k = embeddings.num_speakers();
    if args.m < 2 || args.m > k {
        return Err(CliError::Usage(format!(
            "m must satisfy 2 <= m <= {k} (got {})",
            args.m
        )));
    }
    let objective = parse_objective(&args.objective)?;
    let sim = similarity_matrix(&embeddings);
    let selected = greedy_select_with(&sim, args.m, objective)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for id in &selected {
        let _ = writeln!(out, "{id}");
    }

    if let Some(path) = &args.matrix_out {
        if path.as_os_str() == "-" {
            sim.write_csv(&mut out)
                .map_err(|e| CoreError::io("<stdout>", e))?;
        } else {
            let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
            sim.write_csv(file).map_err(|e| CoreError::io(path, e))?;
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct PoisonArgs {
    /// Corpus manifest CSV (`sample_id,path,label`).
    manifest: PathBuf,
    /// Output directory for poisoned WAVs, manifest, and run record.
    out_dir: PathBuf,

    /// Record per-file failures and finish instead of aborting.
    #[arg(long)]
    keep_going: bool,

    #[command(flatten)]
    overrides: PlanOverrides,
}

pub fn cmd_poison(args: PoisonArgs) -> CliResult<()> {
    let manifest = load_manifest(&args.manifest)?;
    let plan = args.overrides.resolve()?;
    let record = RunRecord::begin(&plan);

    let options = BuildOptions {
        keep_going: args.keep_going,
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Core(CoreError::io(&args.out_dir, e)))?;

    let result = build_poisoned_dataset(&manifest, &plan, &args.out_dir, &options);
    let (poisoned_manifest, failures) = match result {
        Ok(pair) => pair,
        Err(CoreError::Build { failures }) => {
            record.finish(failures.clone(), &args.out_dir)?;
            return Err(CliError::Core(CoreError::Build { failures }));
        }
        Err(e) => {
            record.finish(Vec::new(), &args.out_dir)?;
            return Err(e.into());
        }
    };

    let manifest_path = args.out_dir.join("poisoned_manifest.csv");
    poisoned_manifest.save_csv(&manifest_path)?;
    record.finish(failures, &args.out_dir)?;

    let poisoned = poisoned_manifest
        .entries
        .iter()
        .filter(|e| e.subset != Subset::Benign)
        .count();
    let benign = poisoned_manifest.entries.len() - poisoned;
    println!("poisoned={poisoned}");
    println!("benign={benign}");
    println!("manifest={}", manifest_path.display());
    Ok(())
}

#[derive(Args)]
pub struct AttackTestsetArgs {
    /// Test-set manifest CSV (`sample_id,path,label`).
    manifest: PathBuf,
    /// Output directory for triggered WAVs, manifest, and run record.
    out_dir: PathBuf,

    /// full: complete trigger; pitch-only: pitch boost without the tone.
    #[arg(long, default_value = "full")]
    variant: String,

    #[arg(long)]
    keep_going: bool,

    #[command(flatten)]
    overrides: PlanOverrides,
}

pub fn cmd_attack_testset(args: AttackTestsetArgs) -> CliResult<()> {
    let manifest = load_manifest(&args.manifest)?;
    let plan = args.overrides.resolve()?;

    let variant = match args.variant.as_str() {
        "full" => TestsetVariant::Full,
        "pitch-only" | "pitch_only" => TestsetVariant::PitchOnly,
        other => return Err(CliError::Usage(format!("unknown variant `{other}`"))),
    };
    if variant == TestsetVariant::PitchOnly && plan.trigger != TriggerKind::Pbsm {
        return Err(CliError::Usage(
            "--variant pitch-only applies to the pbsm trigger only".into(),
        ));
    }

    let record = RunRecord::begin(&plan);
    let options = BuildOptions {
        keep_going: args.keep_going,
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Core(CoreError::io(&args.out_dir, e)))?;

    let result = build_attack_testset(&manifest, &plan, variant, &args.out_dir, &options);
    let (attack_manifest, failures) = match result {
        Ok(pair) => pair,
        Err(CoreError::Build { failures }) => {
            record.finish(failures.clone(), &args.out_dir)?;
            return Err(CliError::Core(CoreError::Build { failures }));
        }
        Err(e) => {
            record.finish(Vec::new(), &args.out_dir)?;
            return Err(e.into());
        }
    };

    let manifest_path = args.out_dir.join("attack_manifest.csv");
    attack_manifest.save_csv(&manifest_path)?;
    record.finish(failures, &args.out_dir)?;

    let excluded = attack_manifest
        .entries
        .iter()
        .filter(|e| e.excluded_from_asr)
        .count();
    println!("triggered={}", attack_manifest.entries.len());
    println!("excluded_from_asr={excluded}");
    println!("manifest={}", manifest_path.display());
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Predictions over the benign test set (`sample_id,predicted_label`).
    #[arg(long, requires = "benign_manifest")]
    benign_preds: Option<PathBuf>,
    /// Benign test-set manifest (`sample_id,path,label`).
    #[arg(long)]
    benign_manifest: Option<PathBuf>,

    /// Predictions over the attack test set.
    #[arg(long, requires = "attack_manifest")]
    attack_preds: Option<PathBuf>,
    /// Attack-testset manifest produced by `attack-testset`.
    #[arg(long)]
    attack_manifest: Option<PathBuf>,

    #[arg(long, default_value = "text")]
    format: String,

    #[command(flatten)]
    overrides: PlanOverrides,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let format: ReportFormat = args
        .format
        .parse()
        .map_err(|e: CoreError| CliError::Usage(e.to_string()))?;
    if args.benign_preds.is_none() && args.attack_preds.is_none() {
        return Err(CliError::Usage(
            "nothing to evaluate; pass --benign-preds and/or --attack-preds".into(),
        ));
    }

    let mut report = MetricsReport::default();

    if let Some(preds_path) = &args.benign_preds {
        let preds = load_predictions(preds_path)?;
        let manifest = load_manifest(args.benign_manifest.as_ref().expect("clap requires"))?;
        report.benign_accuracy = Some(benign_accuracy(&preds, &manifest)?);
    }

    if let Some(preds_path) = &args.attack_preds {
        let preds = load_predictions(preds_path)?;
        let attack = load_poisoned_manifest(args.attack_manifest.as_ref().expect("clap requires"))?;
        let plan = args.overrides.resolve()?;
        let asr = attack_success_rate(&preds, &attack, &plan)?;
        report.asr_overall = asr.asr_overall;
        report.asr_per_target = asr.asr_per_target;
        report.asr_per_class = asr.asr_per_class;
    }

    print!("{}", render_report(&report, format));
    Ok(())
}
