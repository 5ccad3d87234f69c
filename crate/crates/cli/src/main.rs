//! `skipfree` command-line tool.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skipfree::RootVariant;

/// Solve skip-free Markov decision processes on rooted trees.
#[derive(Parser, Debug)]
#[command(name = "skipfree", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file and print its chain class.
    Validate {
        input: PathBuf,
    },
    /// Solve a model and print g*, h*, d* and the iteration trace.
    Solve {
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Solve as a discounted problem with this factor (overrides the file).
        #[arg(long)]
        discount: Option<f64>,
        /// Use the communicating-model algorithm.
        #[arg(long)]
        communicating: bool,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Run the skip-free solver and the reference solvers side by side.
    Compare {
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Shift the skip-free results, to exercise the disagreement exit code.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
    /// Emit a transformed model.
    Transform {
        input: PathBuf,
        /// Augment for discount factor β (defaults to the file's `discount`).
        #[arg(long, conflicts_with = "uniformize")]
        discount: Option<f64>,
        /// Convert a continuous-time model to discrete time.
        #[arg(long)]
        uniformize: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a model file.
    Gen {
        #[command(flatten)]
        source: GenSource,
        /// Seed for random instances.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// State bound for random instances.
        #[arg(long, default_value_t = 8)]
        states: usize,
        /// Maximum actions per state for random instances.
        #[arg(long, default_value_t = 3)]
        actions: usize,
        /// Random instance on a chain instead of a branching tree.
        #[arg(long)]
        chain: bool,
        /// Random communicating (not recurrent) instance.
        #[arg(long)]
        communicating: bool,
        /// Random continuous-time instance.
        #[arg(long, conflicts_with = "communicating")]
        ctmdp: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct GenSource {
    /// Multi-class queue, e.g. `--queue K=2 M=3 lambda=0.3,0.5 mu=0.6,1.4 cost=0,1.5`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    queue: Option<Vec<String>>,
    /// Seeded random skip-free instance.
    #[arg(long)]
    random: bool,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, value_parser = parse_variant, default_value = "mean-improvement")]
    variant: RootVariant,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

fn parse_variant(s: &str) -> Result<RootVariant, String> {
    s.parse().map_err(|_| format!("expected one of first-return, optimality, mean-improvement; got {s:?}"))
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Human,
    Csv,
    Kv,
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Invalid = 1,
    NoConvergence = 2,
    Disagreement = 3,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match commands::run(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::Invalid
        }
    };
    ExitCode::from(status as u8)
}
