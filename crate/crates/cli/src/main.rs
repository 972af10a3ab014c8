mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "hemocast", version, about = "Mean aortic pressure forecasting pipeline")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root seed; every other seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic recordings.
    Synth,
    /// Cut recordings into labelled windows and split them.
    Prepare { recordings: PathBuf },
    /// Train the configured model on a prepared cache.
    Train { cache: PathBuf },
    /// Score models and the persistence baseline on the test split.
    Eval {
        cache: PathBuf,
        models: Vec<PathBuf>,
        /// Also score a predictor that returns the truth.
        #[arg(long)]
        oracle: bool,
    },
    /// Forecast the steps following `--at` in a recording.
    Forecast {
        model: PathBuf,
        recording: PathBuf,
        /// AT step the forecast starts at; the input ends just before it.
        #[arg(long)]
        at: usize,
    },
    /// Merge report tables from several eval runs.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
        cfg.apply_text(&text)?;
    }
    for raw in &cli.overrides {
        cfg.apply_override(raw)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cfg.resolve()
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| CliError::usage("--out DIR is required"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    eprintln!("seed {}", cfg.seed()?);
    match &cli.command {
        Command::Synth => commands::synth(&cfg, out_dir(cli)?),
        Command::Prepare { recordings } => commands::prepare(&cfg, recordings, out_dir(cli)?),
        Command::Train { cache } => commands::train(&cfg, cache, out_dir(cli)?),
        Command::Eval { cache, models, oracle } => commands::eval(&cfg, cache, models, *oracle, out_dir(cli)?),
        Command::Forecast { model, recording, at } => commands::forecast(&cfg, model, recording, *at, cli.out.as_deref()),
        Command::Report { reports } => commands::report(&cfg, reports, out_dir(cli)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
