//! `speechpoison`: build sound-element backdoor triggers, poisoned
//! speech-command datasets, attack test sets, and metric reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
//! Stdout carries data; diagnostics go to stderr.

mod commands;
mod overrides;
mod record;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use speechpoison_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "speechpoison",
    version,
    about = "Sound-element backdoor triggers and poisoned-dataset construction"
)]
struct Cli {
    /// Worker threads for per-file trigger application (defaults to the
    /// available parallelism). Output ordering is input-defined regardless.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a trigger to a single WAV file.
    Trigger(commands::TriggerArgs),
    /// Select well-separated timbres from a speaker-embedding CSV.
    SelectTimbres(commands::SelectTimbresArgs),
    /// Build a poisoned training dataset from a corpus manifest.
    Poison(commands::PoisonArgs),
    /// Build a triggered test set for attack-success measurement.
    AttackTestset(commands::AttackTestsetArgs),
    /// Compute benign accuracy and attack success rate from predictions.
    Evaluate(commands::EvaluateArgs),
}

/// Errors at the CLI boundary, mapped onto the exit-code contract.
pub enum CliError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(CoreError::Backend(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    if let Some(jobs) = cli.jobs {
        // Ignore the error when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let result = match cli.command {
        Command::Trigger(args) => commands::cmd_trigger(args),
        Command::SelectTimbres(args) => commands::cmd_select_timbres(args),
        Command::Poison(args) => commands::cmd_poison(args),
        Command::AttackTestset(args) => commands::cmd_attack_testset(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
    };

    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
