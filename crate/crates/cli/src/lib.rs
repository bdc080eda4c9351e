//! The `tca` command line. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad arguments or unmet preconditions |
//! | 3 | I/O or unreadable input file |
//! | 4 | no usable replicate |
//! | 5 | no stable rank (`sweep --select`) |
//! | 6 | rank mismatch (`compare`) |
//! | 7 | task curation failed |

pub mod commands;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tca_core::Algorithm;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tca", version, about = "Tensor component analysis of training snapshots")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, env = "TCA_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for replicate fits; defaults to the logical core count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for all written artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one rank, keep the best replicate.
    Fit(FitArgs),
    /// Fit a range of ranks and optionally select one.
    Sweep(SweepArgs),
    /// Match the components of two factor directories.
    Compare(CompareArgs),
    /// Build a task plan from a 2-D class embedding.
    Curate(CurateArgs),
    /// Assemble a tensor from a snapshot manifest.
    BuildTensor(BuildTensorArgs),
    /// Write a planted tensor and its ground-truth factors.
    Synth(SynthArgs),
    /// Export a top-k unit mask for one component.
    Mask(MaskArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "nn-bcd", value_parser = parse_algorithm)]
    pub algorithm: Algorithm,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// `.npy` tensor or `.json` snapshot manifest.
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub tensor: PathBuf,
    /// Inclusive range, `A..B`.
    #[arg(long, value_parser = parse_rank_range)]
    pub ranks: (usize, usize),
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Pick a rank by the elbow and replicate-stability rules.
    #[arg(long)]
    pub select: bool,
    #[arg(long, default_value_t = tca_core::rank::STABILITY_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Scale each matched similarity by the agreement of the weights.
    #[arg(long)]
    pub penalize_weights: bool,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// CSV with `class,x,y` columns, or an `N x 2` `.npy` used with `--labels`.
    #[arg(long)]
    pub embedding: PathBuf,
    /// Integer class labels when the embedding is `.npy`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub initial: usize,
    #[arg(long)]
    pub tasks: usize,
}

#[derive(Debug, Args)]
pub struct BuildTensorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// File name inside the output directory.
    #[arg(long, default_value = "tensor.npy")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON planted spec; `--seed` overrides its seed.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub factors: PathBuf,
    #[arg(long)]
    pub component: usize,
    #[arg(long)]
    pub top_k: usize,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value = "mask.npy")]
    pub output: String,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_rank_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got '{s}'"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("'{t}' is not a rank"))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a == 0 {
        return Err("ranks start at 1".into());
    }
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok((a, b))
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_ranges() {
        assert_eq!(parse_rank_range("1..8"), Ok((1, 8)));
        assert_eq!(parse_rank_range("3..=3"), Ok((3, 3)));
        assert!(parse_rank_range("8..3").is_err());
        assert!(parse_rank_range("0..3").is_err());
        assert!(parse_rank_range("3-8").is_err());
    }

    #[test]
    fn rank_zero_is_a_usage_error() {
        assert_eq!(run(["tca", "fit", "--tensor", "x.npy", "--rank", "0"]), 2);
    }

    #[test]
    fn default_algorithm_is_bcd() {
        let cli = Cli::try_parse_from(["tca", "fit", "--tensor", "x.npy", "--rank", "2"]).unwrap();
        match cli.command {
            Command::Fit(args) => assert_eq!(args.solver.algorithm, Algorithm::NnBcd),
            other => panic!("{other:?}"),
        }
    }
}
