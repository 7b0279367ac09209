//! `markov-mimic`: build, verify and analyze eigenvalue-map approximations of Markov kernels.

mod commands;
mod config;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "markov-mimic", version, about = "Approximate Markov operators by averages of eigenvalue maps")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the grid size M.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Overrides the tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct a family and certify it.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Certify an existing family (`.json` or `.csv`) against the configured kernel.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        family: PathBuf,
    },
    /// Endpoint measures, relation residuals, feasibility and an extendibility sweep.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        beta: Option<String>,
    },
    /// Worked examples and full runs with fixed seeds.
    Demo {
        #[arg(value_enum, default_value_t = demo::DemoName::All)]
        name: demo::DemoName,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Stage(markov_mimic::Error),
    Certificate(String),
    Io(markov_mimic::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Stage(_) => 3,
            CliError::Certificate(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Stage(e) => match e.stage() {
                Some(s) => write!(f, "stage {s} failed: {}", e.root()),
                None => write!(f, "{e}"),
            },
            CliError::Certificate(m) => write!(f, "certificate failed: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

/// Pipeline errors are stage errors; a failed certificate carried inside one maps to exit 4.
impl From<markov_mimic::Error> for CliError {
    fn from(e: markov_mimic::Error) -> Self {
        match e.root() {
            markov_mimic::Error::CertificateFailed(c) => CliError::Certificate(format!(
                "sup_error {} (eps {}), boundary exact {}",
                c.sup_error, c.eps, c.boundary_ok
            )),
            markov_mimic::Error::Io(_) | markov_mimic::Error::Json(_) | markov_mimic::Error::Csv(_) => CliError::Io(e),
            _ => CliError::Stage(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Build { common } => commands::build(&common),
        Command::Verify { common, family } => commands::verify(&common, &family),
        Command::Analyze { common, alpha, beta } => commands::analyze(&common, alpha.as_deref(), beta.as_deref()),
        Command::Demo { name, common } => demo::run(name, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
