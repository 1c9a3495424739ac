use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qml_errlab::experiments::{run_verb, write_report, ExperimentConfig, Verb};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerbArg {
    FitFunction,
    PhaseRecognition,
    Denoise,
    Entropy,
    CompileCheck,
}

impl From<VerbArg> for Verb {
    fn from(v: VerbArg) -> Verb {
        match v {
            VerbArg::FitFunction => Verb::FitFunction,
            VerbArg::PhaseRecognition => Verb::PhaseRecognition,
            VerbArg::Denoise => Verb::Denoise,
            VerbArg::Entropy => Verb::Entropy,
            VerbArg::CompileCheck => Verb::CompileCheck,
        }
    }
}

/// Prediction-error experiments for parameterized quantum circuit models.
#[derive(Debug, Parser)]
#[command(name = "qml-errlab", version)]
struct Cli {
    #[arg(value_enum)]
    verb: VerbArg,
    /// Flat key=value config; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

fn run(cli: &Cli) -> qml_errlab::Result<bool> {
    let verb = Verb::from(cli.verb);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?, verb)?,
        None => ExperimentConfig::defaults(verb),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let report = run_verb(&cfg)?;
    write_report(&cfg.output_dir, &cfg, &report, cli.plots)?;
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(report.violations.is_empty() || !verb.is_self_check())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
