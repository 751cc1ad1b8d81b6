mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coderag::providers::ProviderError;
use coderag::retrieval::Strategy;

/// Bad invocation or configuration; exits with 64.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_DATA: u8 = 1;
pub const EXIT_PROVIDER: u8 = 2;
pub const EXIT_QUALITY: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "coderag", version, about = "Retrieval-augmented code completion toolkit")]
pub struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set retrieval.k=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Use in-process mock embedding and completion providers.
    #[arg(long, global = true)]
    pub mock_providers: bool,

    /// More log output on standard error (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Scan a source tree, filter it and segment it into retrieval units.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Set aside this fraction of files (seeded by corpus.seed) as
        /// benchmark sources in holdout_files.jsonl.
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Build a retrieval index over a unit store.
    Index {
        #[arg(long)]
        units: PathBuf,
        #[arg(long, value_enum)]
        backend: Backend,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the sliding-window completion benchmark from a file store.
    BenchMake {
        #[arg(long)]
        files: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        window: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        stride: Option<u64>,
        /// Number of instances to sample.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate one strategy and K over a benchmark.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sweep K (default) or corpus fraction.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// K values: `0..5` (inclusive) or a list `0,1,3`.
        #[arg(long)]
        k: Option<String>,
        /// Corpus fractions, e.g. `0.25,0.5,1`; switches to a scale sweep.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Collect run summaries into a table and charts.
    Report {
        /// Directory holding `*.summary.json` files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Pack the corpus into fixed-length training blocks.
    Ftprep {
        #[arg(long)]
        files: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        seq_len: Option<u64>,
    },
    /// Check an embedding server against the wire-protocol fixtures.
    Conformance {
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
    },
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub units: PathBuf,
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Prebuilt indexes; built in memory when omitted.
    #[arg(long)]
    pub bm25: Option<PathBuf>,
    #[arg(long)]
    pub vector: Option<PathBuf>,
    #[arg(long)]
    pub symbol: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Backend {
    Bm25,
    Vector,
    Symbol,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if cause.downcast_ref::<ProviderError>().is_some() {
            return EXIT_PROVIDER;
        }
        if let Some(e) = cause.downcast_ref::<coderag::Error>() {
            return match e {
                coderag::Error::Provider(_) => EXIT_PROVIDER,
                coderag::Error::QualityGate { .. } => EXIT_QUALITY,
                coderag::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
