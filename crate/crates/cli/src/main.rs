mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_file, parse_methods, parse_scenarios, parse_truncate, Command, ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "gmethods", version, about = "G-methods for two time-varying binary treatments")]
struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate one observational dataset as long CSV.
    Simulate(Flags),
    /// True effects per scenario from large simulated trials.
    Truth(Flags),
    /// Run estimators on a long CSV dataset.
    Estimate(Flags),
    /// Stabilized weights and per-time diagnostics for a dataset.
    Weights(Flags),
    /// Simulation study: raw estimates and performance report.
    Study(Flags),
    /// The full scenario panel with report and figures.
    Reproduce(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Scenario ids: `3`, `1,4`, `1..9`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    nsim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replication index used by `simulate`.
    #[arg(long)]
    replication: Option<u64>,
    /// Methods, comma separated or repeated.
    #[arg(long)]
    method: Vec<String>,
    #[arg(long)]
    mc_size: Option<usize>,
    /// Bootstrap resamples for standard errors.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Weight truncation percentiles `lo,hi`; bare flag means 10,90.
    #[arg(long, num_args = 0..=1, default_missing_value = "10,90")]
    truncate: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for SVG panels.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Trial size for simulated truth.
    #[arg(long)]
    rct_n: Option<usize>,
    /// Input dataset (long CSV).
    #[arg(long)]
    data: Option<PathBuf>,
    /// `simulated` or `published`.
    #[arg(long)]
    truth: Option<String>,
}

fn invalid(key: &str, message: String) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        message,
    }
}

impl Flags {
    fn overrides(&self) -> Result<Overrides, ConfigError> {
        let methods = if self.method.is_empty() {
            None
        } else {
            Some(parse_methods(&self.method.join(","))?)
        };
        Ok(Overrides {
            scenario: self
                .scenario
                .as_deref()
                .map(parse_scenarios)
                .transpose()
                .map_err(|m| invalid("scenario", m))?,
            n: self.n,
            nsim: self.nsim,
            seed: self.seed,
            replication: self.replication,
            method: methods,
            mc_size: self.mc_size,
            bootstrap: self.bootstrap,
            truncate: self
                .truncate
                .as_deref()
                .map(parse_truncate)
                .transpose()
                .map_err(|m| invalid("truncate", m))?,
            out: self.out.clone(),
            svg: self.svg.clone(),
            rct_n: self.rct_n,
            data: self.data.clone(),
            truth: self
                .truth
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|m| invalid("truth", m))?,
        })
    }
}

fn configure(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let (command, flags) = match &cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Truth(f) => (Command::Truth, f),
        Sub::Estimate(f) => (Command::Estimate, f),
        Sub::Weights(f) => (Command::Weights, f),
        Sub::Study(f) => (Command::Study, f),
        Sub::Reproduce(f) => (Command::Reproduce, f),
    };
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            parse_file(&text, command)?
        }
        None => Overrides::default(),
    };
    RunConfig::resolve(command, file, flags.overrides()?)
}

fn init_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("GMETHODS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| format!("GMETHODS_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error\tkind=config\tmessage={e}");
        return ExitCode::from(2);
    }
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            let kind = match e {
                ConfigError::UnknownKey { .. } => "unknown_key",
                ConfigError::TypeMismatch { .. } => "type_mismatch",
                _ => "config",
            };
            eprintln!("error\tkind={kind}\tmessage={e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cfg) {
        Ok(outcome) => {
            for line in &outcome.errors {
                eprintln!("{line}");
            }
            if outcome.errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error\tkind={}\tmessage={e}", e.kind());
            ExitCode::from(3)
        }
    }
}
