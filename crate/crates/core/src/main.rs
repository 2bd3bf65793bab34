use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kuramoto_damping::experiment::{
    configured_output_dir, failure_artifact, run_experiment, write_artifacts, ExperimentKind,
};
use kuramoto_damping::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
    Stability,
    KcScan,
    Linear,
    Witness,
    Nonlinear,
    FiniteN,
    Compare,
}

impl From<Subcommand> for ExperimentKind {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::Stability => Self::Stability,
            Subcommand::KcScan => Self::KcScan,
            Subcommand::Linear => Self::Linear,
            Subcommand::Witness => Self::Witness,
            Subcommand::Nonlinear => Self::Nonlinear,
            Subcommand::FiniteN => Self::FiniteN,
            Subcommand::Compare => Self::Compare,
        }
    }
}

/// Stability, damping and finite-N experiments for the Kuramoto model.
///
/// Exit status: 0 on success, 2 on invalid input, 3 on numerical failure
/// (an error.json diagnostic is written to the output directory).
/// KD_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputDir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

const VALIDATION: u8 = 2;
const NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(VALIDATION);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(VALIDATION);
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(VALIDATION);
        }
    };
    let out = cli.out.clone().or_else(|| configured_output_dir(&text)).unwrap_or_else(|| PathBuf::from("."));
    let kind = ExperimentKind::from(cli.subcommand);
    let base = cli.config.parent().unwrap_or(Path::new("."));
    match run_experiment(kind, &text, base) {
        Ok(artifacts) => match write_artifacts(&out, &artifacts) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(NUMERIC)
            }
        },
        Err(e) if e.is_validation() => {
            eprintln!("error: {e}");
            ExitCode::from(VALIDATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            report_failure(kind, &text, &out, &e);
            ExitCode::from(NUMERIC)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("KD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| format!("KD_THREADS must be a positive integer, got `{value}`"))?;
    if threads == 0 {
        return Err("KD_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn report_failure(kind: ExperimentKind, text: &str, out: &Path, e: &Error) {
    if let Err(w) = write_artifacts(out, &[failure_artifact(kind, text, e)]) {
        eprintln!("error: could not write diagnostics: {w}");
    }
}
