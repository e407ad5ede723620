//! `dbh`: measure trunk diameters from far/close image pairs.
//!
//! Exit codes: 0 ok, 1 pipeline error, 2 usage error, 3 I/O error.

mod eval;
mod measure;
mod serve;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dbh_core::providers::ExternalEndpoint;
use dbh_core::service::{ProviderSelector, ServiceConfig};
use dbh_core::{Error, ErrorCode};

#[derive(Debug, Parser)]
#[command(name = "dbh", version, about = "Trunk diameter at breast height from a far/close image pair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Measure one far/close pair.
    Measure(measure::MeasureArgs),
    /// Segment one image and write the trunk mask.
    Segment(measure::SegmentArgs),
    /// Render synthetic mask pairs with known ground truth.
    Synth(synth::SynthArgs),
    /// Error statistics over a manifest, per species.
    Eval(eval::EvalArgs),
    /// Host the measurement protocol.
    Serve(serve::ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Inputs already are binary masks.
    Mask,
    /// Stored masks looked up by image content.
    Oracle,
    /// Otsu threshold segmenter.
    Baseline,
    /// Remote segmenter over the stream protocol.
    External,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Mask)]
    provider: ProviderKind,
    /// Directory of `<id>.img` / `<id>.mask.png` pairs for the oracle provider.
    #[arg(long)]
    oracle_dir: Option<PathBuf>,
    /// `host:port` of a segmenter for the external provider.
    #[arg(long)]
    external: Option<String>,
    /// Baseline: the trunk is brighter than the background.
    #[arg(long)]
    invert: bool,
    /// Baseline: number of 3x3 openings (0-4).
    #[arg(long, default_value_t = 1)]
    open_iterations: u32,
}

impl ProviderArgs {
    pub fn selector(&self) -> ProviderSelector {
        match self.provider {
            ProviderKind::Mask => ProviderSelector::Mask,
            ProviderKind::Oracle => ProviderSelector::Oracle,
            ProviderKind::Baseline => {
                ProviderSelector::Baseline { invert: self.invert, open_iterations: self.open_iterations }
            }
            ProviderKind::External => ProviderSelector::External,
        }
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            oracle_dir: self.oracle_dir.clone(),
            external: self.external.clone().map(ExternalEndpoint::new),
            segment_default: self.selector(),
        }
    }
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Pipeline(Error),
    /// An error already rendered into a response status.
    Status {
        code: String,
        message: String,
    },
    Usage(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) if e.code() == ErrorCode::Io => 3,
            CliError::Pipeline(_) => 1,
            CliError::Status { code, .. } if code == ErrorCode::Io.as_str() => 3,
            CliError::Status { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Pipeline(e) => write!(f, "error[{}]: {e}", e.code()),
            CliError::Status { code, message } => write!(f, "error[{code}]: {message}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "error[IO]: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Pipeline(e)
    }
}

/// Wraps an I/O failure with the path involved.
pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Measure(args) => measure::run_measure(&args),
        Command::Segment(args) => measure::run_segment(&args),
        Command::Synth(args) => synth::run_synth(&args),
        Command::Eval(args) => eval::run_eval(&args),
        Command::Serve(args) => serve::run_serve(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
