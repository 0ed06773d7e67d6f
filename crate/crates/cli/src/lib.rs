//! File-based front end for the `tfusion` binary: JSON schemas, one function
//! per subcommand, and the benchmark harness.

use std::path::PathBuf;

use thiserror::Error;

use tempora_core::simnet::ConfigError;
use tempora_core::tf::TfError;
use tempora_core::timelock::TimelockError;

pub mod bench;
pub mod commands;
pub mod files;

/// Environment switch that unlocks small fields and universes for test fixtures.
pub const SMALL_FIELD_ENV: &str = "TF_TEST_SMALL_FIELD";

pub fn small_field_enabled() -> bool {
    std::env::var(SMALL_FIELD_ENV).is_ok_and(|v| v == "1")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: invalid document at \"{pointer}\": {message}")]
    Schema { origin: String, pointer: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Protocol(#[from] TfError),
    #[error(transparent)]
    Timelock(#[from] TimelockError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// How a successful command ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::VerificationFailed => 1,
        }
    }
}

pub const ERROR_EXIT_CODE: u8 = 2;
