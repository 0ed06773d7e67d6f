use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Parser, Subcommand};

use tempora_cli::bench::{Suite, MIN_TRIALS};
use tempora_cli::commands::{self, GenPuzzleArgs, KeygenArgs, SetupArgs};
use tempora_cli::{CliError, Outcome, ERROR_EXIT_CODE};

#[derive(Parser)]
#[command(name = "tfusion", version, about = "Verifiable linear combinations of time-locked messages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick a field and public x-coordinates.
    Setup {
        #[arg(long, default_value_t = 128)]
        field_bits: u64,
        #[arg(long, default_value_t = 1)]
        leaders: usize,
        #[arg(long, default_value_t = 1)]
        threshold: usize,
        /// Plaintext universe size in bits; values other than 64 need TF_TEST_SMALL_FIELD=1.
        #[arg(long)]
        universe_bits: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an RSA key pair for time-locking.
    Keygen {
        #[arg(long, default_value_t = 1024)]
        prime_bits: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lock a message for a number of sequential squarings.
    Genpuzzle {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        message: String,
        /// Sequential squarings needed to open the puzzle.
        #[arg(long)]
        delta: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Open a puzzle by sequential squaring.
    Solve {
        #[arg(long)]
        puzzle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a solution against its puzzle; exits 1 if it does not hold.
    Verify {
        #[arg(long)]
        puzzle: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Run the full multi-client protocol in process and print the report.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time root finding or PRF calls and write CSV.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 128, value_parser = PossibleValuesParser::new(["128", "256"]).map(|s| s.parse::<u64>().unwrap()))]
        bits: u64,
        #[arg(long, default_value_t = MIN_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Setup { field_bits, leaders, threshold, universe_bits, seed, out } => {
            commands::cmd_setup(&SetupArgs { field_bits, leaders, threshold, universe_bits, seed, out })
        }
        Command::Keygen { prime_bits, seed, out } => commands::cmd_keygen(&KeygenArgs { prime_bits, seed, out }),
        Command::Genpuzzle { params, keys, message, delta, seed, out } => {
            commands::cmd_genpuzzle(&GenPuzzleArgs { params, keys, message, delta, seed, out })
        }
        Command::Solve { puzzle, out } => commands::cmd_solve(&puzzle, &out),
        Command::Verify { puzzle, solution } => {
            let outcome = commands::cmd_verify(&puzzle, &solution)?;
            println!("{}", if outcome == Outcome::Success { "valid" } else { "invalid" });
            Ok(outcome)
        }
        Command::Simulate { config, seed } => {
            let text = commands::cmd_simulate(&config, seed)?;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
            Ok(Outcome::Success)
        }
        Command::Bench { suite, bits, trials, seed, out } => {
            commands::cmd_bench(suite, bits, trials, seed, out.as_deref())?;
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(ERROR_EXIT_CODE)
        }
    }
}
