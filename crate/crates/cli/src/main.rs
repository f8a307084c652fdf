//! `cbnr`: generate data, train, evaluate and analyze CBN models.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable naming the default dataset directory.
pub const DATA_ENV: &str = "CBNR_DATA";

#[derive(Debug, Parser)]
#[command(name = "cbnr", version, about = "Conditional batch normalization for mini-CLEVR visual question answering")]
struct Cli {
    /// Worker threads for data rendering and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a mini-CLEVR dataset.
    Generate(GenerateArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Analyses of a trained model.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub num_train: usize,
    #[arg(long, default_value_t = 2_000)]
    pub num_val: usize,
    #[arg(long, default_value_t = 2_000)]
    pub num_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = miniclevr::dataset::DEFAULT_IMAGE_SIZE)]
    pub image_size: usize,
    /// Overwrite an existing dataset directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory.
    #[arg(long, env = DATA_ENV)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Output directory for checkpoints, history and the effective config.
    #[arg(long)]
    pub out: PathBuf,
    /// Flat JSON config with dotted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model preset: desk, paper or tiny (overrides the config file).
    #[arg(long)]
    pub preset: Option<String>,
    /// Extra `key=value` overrides, e.g. `--set train.learning_rate=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    pub from_checkpoint: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long)]
    pub limit_train: Option<usize>,
    /// Print one line per epoch.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Add the per-program-length table.
    #[arg(long)]
    pub by_length: bool,
    /// Also write report.json and CSV tables here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Dump per-question CBN parameters to cbn_dump.csv.
    CbnDump {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = cbnr_analysis::PAPER_TSNE_POINTS)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// kNN label purity of a CBN dump, written to purity.json.
    Purity {
        /// A cbn_dump.csv file.
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, default_value_t = cbnr_analysis::purity::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Off-by-n profile of counting mistakes.
    CountErrors {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rate by program length.
    Length {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Logical consistency of count comparisons on fresh scenes.
    Consistency {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 500)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        CliError { code: EXIT_MISMATCH, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<cbnr::Error> for CliError {
    fn from(e: cbnr::Error) -> Self {
        use cbnr::Error as E;
        let code = match &e {
            E::Config(_) => EXIT_USAGE,
            E::Io { .. } => EXIT_IO,
            E::NonFiniteGradient { .. } | E::NonFiniteLoss { .. } | E::Tensor(_) => EXIT_NUMERIC,
            E::Checkpoint(c) => return c.into(),
            E::Dataset(d) => return d.into(),
            E::Contract(_) => EXIT_MISMATCH,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<&cbnr::CheckpointError> for CliError {
    fn from(e: &cbnr::CheckpointError) -> Self {
        let code = if matches!(e, cbnr::CheckpointError::Io { .. }) { EXIT_IO } else { EXIT_MISMATCH };
        CliError { code, message: e.to_string() }
    }
}

impl From<cbnr::CheckpointError> for CliError {
    fn from(e: cbnr::CheckpointError) -> Self {
        (&e).into()
    }
}

impl From<&miniclevr::DatasetError> for CliError {
    fn from(e: &miniclevr::DatasetError) -> Self {
        use miniclevr::DatasetError as D;
        let code = match e {
            D::Io { .. } => EXIT_IO,
            D::Exists(_) | D::Invalid(_) => EXIT_USAGE,
            D::Json { .. } | D::Malformed(_) => EXIT_MISMATCH,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<miniclevr::DatasetError> for CliError {
    fn from(e: miniclevr::DatasetError) -> Self {
        (&e).into()
    }
}

impl From<cbnr_analysis::AnalysisError> for CliError {
    fn from(e: cbnr_analysis::AnalysisError) -> Self {
        match e {
            cbnr_analysis::AnalysisError::Model(m) => m.into(),
            other => CliError::usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Analyze(a) => commands::analyze(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
