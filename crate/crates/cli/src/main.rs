//! `destine`: key management, chain lifecycle, uploads, the HTTP service,
//! benchmarking and mixture-model analysis.
//!
//! Exit codes: 0 success, 1 verification or authentication failure,
//! 2 usage or configuration error.

mod commands;
mod config;
mod keys;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "destine", version, about = "Proof-of-authority ledger for content-addressed files")]
struct Cli {
    /// TOML configuration file
    #[arg(long, short, global = true, env = "DESTINE_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KeyRole {
    Admin,
    Uploader,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a signing key pair, or a symmetric chain key with --symmetric
    Keygen {
        #[arg(long, required_unless_present = "symmetric", conflicts_with = "symmetric")]
        role: Option<KeyRole>,
        /// Generate the 256-bit container key instead of a signing key
        #[arg(long)]
        symmetric: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Create the genesis block and write the encrypted container
    Init {
        /// Replace an existing chain file
        #[arg(long)]
        force: bool,
    },
    /// Store a file and append a co-signed block for it
    Upload { file: PathBuf },
    /// Retrieve a stored file by content id or block index
    Get {
        #[arg(long, conflicts_with = "index", required_unless_present = "index")]
        cid: Option<String>,
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt and fully verify the chain
    Verify,
    /// Run the HTTP upload service
    Serve {
        /// Listen address, overriding serve.addr
        #[arg(long)]
        addr: Option<std::net::SocketAddr>,
    },
    /// Timed upload/retrieve runs over mutated payloads
    Bench {
        /// Comma-separated sizes from 1k, 10k, 100k, 1m
        #[arg(long, default_value = "1k,10k,100k,1m")]
        sizes: String,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// CSV output path
        #[arg(long)]
        out: PathBuf,
        /// Shorthand for --backend ipfs
        #[arg(long)]
        ipfs: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit Gaussian mixtures to a benchmark CSV
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = destine_core::gmm::DEFAULT_MAX_K)]
        max_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for summary.csv, summary.md and density.csv
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. } | Command::Bench { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
