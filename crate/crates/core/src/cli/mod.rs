//! The `aeris` command line: subcommands, run configuration and the
//! synthetic data generator.
//!
//! Exit codes: 0 on success, 1 when at least one model failed (every other
//! artifact is still written), 2 on a usage or input error.

mod config;
mod pipeline;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{
    FeatureConfig, ModelConfig, ModelKind, Overrides, RunConfig, SynthConfig, BUNDLED_SYNTH_CONFIG, SEED_ENV,
};
pub use pipeline::{
    analyze_stage, clean_stage, cleaned_frame, evaluate_stage, fit_model, init_run, load_forecaster, load_raw,
    model_seed, prepare, read_frame, report_stage, train_stage, Manifest, ModelStatus, Prepared, RunPaths, Trained,
};
pub use synth::{synth_data, synth_start, SynthData, MIN_HOURS, SPIKE_HEIGHT};

use crate::data::{write_frame_file, CleaningConfig};
use crate::error::{Error, Result};
use crate::eval::{ModelFailure, ReportFormat};

#[derive(Debug, Parser)]
#[command(name = "aeris", version, about = "Multi-horizon PM2.5 forecasting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remove outliers, interpolate gaps and clamp negative pollutant values.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Absolute deviation from the smoothed series that marks an outlier.
        #[arg(long)]
        threshold: Option<f64>,
        /// Span of the forward and backward moving averages.
        #[arg(long)]
        span: Option<usize>,
    },
    /// Descriptive statistics, correlations, stationarity tests and histograms.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every configured model and write checkpoints and loss curves.
    Train(RunArgs),
    /// Score checkpointed models and write report.csv and report.md.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Re-render the report of an evaluated run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "md")]
        format: String,
    },
    /// Run clean, analyze, train, evaluate and report in sequence.
    All(RunArgs),
    /// Generate a synthetic hourly station file.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 8760)]
        hours: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration; the bundled synthetic-data config when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's input file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Overrides the config's run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for model fitting.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::bundled(),
        };
        let overrides = Overrides {
            seed: self.seed,
            input: self.input.clone(),
            output: self.out.clone(),
        };
        base.resolve(&overrides, std::env::var(SEED_ENV).ok().as_deref())
    }
}

/// Result of a command that ran to completion.
enum Completed {
    Done,
    ModelFailures(Vec<ModelFailure>),
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn execute(command: Command) -> Result<Completed> {
    match command {
        Command::Clean {
            input,
            out,
            threshold,
            span,
        } => {
            let mut cleaning = CleaningConfig::default();
            if let Some(t) = threshold {
                cleaning.outlier_threshold = t;
            }
            if let Some(s) = span {
                cleaning.ewma_span = s;
            }
            let raw = read_frame(&input)?;
            let paths = RunPaths::new(out);
            clean_stage(&raw, &cleaning, &paths)?;
            println!("wrote {} and {}", paths.clean().display(), paths.outliers().display());
            Ok(Completed::Done)
        }
        Command::Analyze { input, out } => {
            let frame = read_frame(&input)?;
            let written = analyze_stage(&frame, &RunPaths::new(out).analysis())?;
            println!("wrote {} analysis files", written.len());
            Ok(Completed::Done)
        }
        Command::Train(args) => {
            let cfg = args.config()?;
            let (paths, mut manifest) = init_run(&cfg)?;
            let failures = train_stage(&cfg, &paths, &mut manifest, args.jobs)?;
            println!("trained {} of {} models into {}", cfg.models.len() - failures.len(), cfg.models.len(), paths.root.display());
            Ok(outcome(failures))
        }
        Command::Evaluate { run } => {
            let ev = evaluate_stage(&RunPaths::new(run))?;
            println!("scored {} models", ev.table.models().len());
            Ok(outcome(ev.failures))
        }
        Command::Report { run, format } => {
            let format: ReportFormat = format.parse()?;
            print!("{}", report_stage(&RunPaths::new(run), format)?);
            Ok(Completed::Done)
        }
        Command::All(args) => {
            let cfg = args.config()?;
            let (paths, mut manifest) = init_run(&cfg)?;
            let raw = load_raw(&cfg, &paths)?;
            let cleaned = clean_stage(&raw, &cfg.cleaning, &paths)?;
            manifest.record_stage("clean");
            analyze_stage(&cleaned, &paths.analysis())?;
            manifest.record_stage("analyze");
            let mut failures = train_stage(&cfg, &paths, &mut manifest, args.jobs)?;
            let ev = evaluate_stage(&paths)?;
            for f in ev.failures {
                if !failures.iter().any(|x| x.model == f.model) {
                    failures.push(f);
                }
            }
            print!("{}", report_stage(&paths, ReportFormat::Markdown)?);
            Ok(outcome(failures))
        }
        Command::Synth { seed, hours, out } => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.ok_or_else(|| Error::Config(format!("pass --seed or export {SEED_ENV}")))?,
            };
            let data = synth_data(seed, hours)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_frame_file(&data.frame, &out, "timestamp", true)?;
            println!(
                "wrote {hours} hours to {} ({} spikes, {} missing runs)",
                out.display(),
                data.spikes.len(),
                data.gaps.len()
            );
            Ok(Completed::Done)
        }
    }
}

fn outcome(failures: Vec<ModelFailure>) -> Completed {
    if failures.is_empty() {
        Completed::Done
    } else {
        Completed::ModelFailures(failures)
    }
}

/// Runs one parsed command line and maps the outcome to an exit code.
pub fn run(cli: Cli) -> ExitCode {
    match execute(cli.command) {
        Ok(Completed::Done) => ExitCode::SUCCESS,
        Ok(Completed::ModelFailures(failures)) => {
            for f in &failures {
                eprintln!("model `{}` failed: {}", f.model, f.reason);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Entry point of the `aeris` binary. Argument errors exit with code 2.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
