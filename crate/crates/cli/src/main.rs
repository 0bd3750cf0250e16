mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Sysexits-style codes.
pub const EXIT_TRUNCATED: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;

#[derive(Parser, Debug)]
#[command(
    name = "obsdecomp",
    version,
    about = "Decompose observables into shallow-circuit diagonal terms and estimate them by sampling"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "OBSDECOMP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Operator input: a JSON operator file or a Pauli-sum text file.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct OperatorSource {
    /// Operator JSON (`dense` or `coo` entries).
    #[arg(long)]
    operator: Option<PathBuf>,
    /// Pauli sum, one `coefficient LETTERS` term per line.
    #[arg(long)]
    pauli: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Greedy decomposition of an operator; writes a resumable checkpoint.
    ///
    /// Exits with 2 when the term budget runs out before the spectral
    /// residual reaches --eps1.
    Decompose(commands::DecomposeArgs),
    /// Importance-sampled estimate of <psi|H|psi> from a checkpoint.
    Estimate(commands::EstimateArgs),
    /// Sample-complexity floor for measuring an operator with the ansatz.
    Bound(commands::BoundArgs),
    /// Full benchmark from a JSON config; outputs land in a directory named
    /// by the run's manifest digest.
    Bench(commands::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Bound(a) => commands::bound(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(obsdecomp::Error::Config(items)) = e.downcast_ref::<obsdecomp::Error>() {
                for item in items {
                    eprintln!("  {item}");
                }
            }
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
