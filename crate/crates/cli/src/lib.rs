//! Command-line driver: argument handling, run configuration, exit codes
//! and structured error output. The subcommands live in [`commands`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use adstrat::report::Format;
use adstrat::stats::default_bucket_edges;
use adstrat::AdLibraryCatalog;
use anyhow::anyhow;
use clap::{Parser, Subcommand};

pub mod commands;
mod failure;

pub use failure::Failure;

/// Exit status for a completed run.
pub const EXIT_OK: i32 = 0;
/// Exit status when loading or analysis fails.
pub const EXIT_ANALYSIS: i32 = 1;
/// Exit status for bad arguments, paths or configuration files.
pub const EXIT_USAGE: i32 = 2;

/// Environment variables overriding the global flags share this prefix.
pub const ENV_PREFIX: &str = "ADSTRAT_";

#[derive(Debug, Parser)]
#[command(name = "adstrat", version, about = "Ad library integration analysis for Android app corpora")]
pub struct Cli {
    /// Catalog file (JSON lines, `catalog v1`). The built-in catalog is used when omitted.
    #[arg(long, global = true, env = "ADSTRAT_CATALOG")]
    pub catalog: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "ADSTRAT_OUT", default_value = "adstrat-out")]
    pub out: PathBuf,

    /// Table format: csv or markdown.
    #[arg(long, global = true, env = "ADSTRAT_FORMAT", default_value = "csv")]
    pub format: Format,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, env = "ADSTRAT_PARALLELISM")]
    pub parallelism: Option<usize>,

    /// Seed for commands that draw random numbers.
    #[arg(long, global = true, env = "ADSTRAT_SEED")]
    pub seed: Option<u64>,

    /// Verify DEX adler32 checksums while loading binary updates.
    #[arg(long, global = true, env = "ADSTRAT_VERIFY_CHECKSUM")]
    pub verify_checksum: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a corpus; print per-app update counts.
    Ingest {
        corpus: PathBuf,
        /// Also write the loaded corpus in IR form to this directory.
        #[arg(long)]
        emit_ir: Option<PathBuf>,
    },
    /// Per-update ad integration profiles and role tables.
    Detect { corpus: PathBuf },
    /// Integration strategy per app and the strategy distribution.
    Classify { corpus: PathBuf },
    /// Lineage evolution metrics, change events and per-strategy tests.
    Evolve { corpus: PathBuf },
    /// Category, download-bucket and correlation tables.
    Report {
        corpus: PathBuf,
        /// Lower bounds of the download buckets, comma separated and increasing.
        #[arg(long, env = "ADSTRAT_BUCKET_EDGES", value_delimiter = ',')]
        bucket_edges: Option<Vec<u64>>,
        /// Libraries listed per category.
        #[arg(long, env = "ADSTRAT_TOP_N", default_value_t = 5)]
        top_n: usize,
    },
    /// Generate a synthetic corpus with ground truth from a fixture spec.
    Forge { spec: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Detect { .. } => "detect",
            Command::Classify { .. } => "classify",
            Command::Evolve { .. } => "evolve",
            Command::Report { .. } => "report",
            Command::Forge { .. } => "forge",
        }
    }

    fn corpus(&self) -> Option<&Path> {
        match self {
            Command::Ingest { corpus, .. }
            | Command::Detect { corpus }
            | Command::Classify { corpus }
            | Command::Evolve { corpus }
            | Command::Report { corpus, .. } => Some(corpus),
            Command::Forge { .. } => None,
        }
    }
}

/// Validated settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus_root: Option<PathBuf>,
    pub catalog: AdLibraryCatalog,
    pub output_dir: PathBuf,
    pub format: Format,
    pub bucket_edges: Vec<u64>,
    pub top_n: usize,
    pub parallelism: usize,
    pub checksum_verify: bool,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, Failure> {
        let catalog = match &cli.catalog {
            None => AdLibraryCatalog::seed(),
            Some(path) if !path.is_file() => {
                return Err(Failure::usage(anyhow!("catalog file {} does not exist", path.display())))
            }
            Some(path) => AdLibraryCatalog::load(path)
                .map_err(|e| Failure::usage(anyhow!(e).context(format!("loading catalog {}", path.display()))))?,
        };
        let corpus_root = cli.command.corpus().map(Path::to_owned);
        if let Some(root) = &corpus_root {
            if !root.is_dir() {
                return Err(Failure::usage(anyhow!("corpus directory {} does not exist", root.display())));
            }
        }
        let parallelism = match cli.parallelism {
            Some(0) => return Err(Failure::usage(anyhow!("--parallelism must be at least 1"))),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let (bucket_edges, top_n) = match &cli.command {
            Command::Report { bucket_edges, top_n, .. } => {
                let edges = bucket_edges.clone().unwrap_or_else(default_bucket_edges);
                if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Failure::usage(anyhow!("--bucket-edges must be non-empty and strictly increasing")));
                }
                if *top_n == 0 {
                    return Err(Failure::usage(anyhow!("--top-n must be at least 1")));
                }
                (edges, *top_n)
            }
            _ => (default_bucket_edges(), 5),
        };
        Ok(Self {
            corpus_root,
            catalog,
            output_dir: cli.out.clone(),
            format: cli.format,
            bucket_edges,
            top_n,
            parallelism,
            checksum_verify: cli.verify_checksum,
            seed: cli.seed,
        })
    }
}

/// Runs a parsed command line inside a worker pool of the configured size.
pub fn run(cli: &Cli) -> Result<(), Failure> {
    let config = RunConfig::from_cli(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Failure::analysis(anyhow!(e).context("starting worker pool")))?;
    pool.install(|| commands::dispatch(&cli.command, &config))
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors are written to stderr as one JSON object per line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("{}", failure.to_json(cli.command.name()));
            failure.exit_code()
        }
    }
}
