//! The `bwe` command line: trace generation, emulated call sweeps, offline
//! training and evaluation reports.

pub mod commands;
pub mod pipeline;
pub mod policy_spec;

pub use commands::{run, Cli, Command};
pub use policy_spec::{PolicyFactory, PolicySpec};

use std::path::{Path, PathBuf};

use bwe_core::dataio::DataError;
use bwe_core::evalx::EvalError;
use bwe_core::netemu::EmuError;
use bwe_core::rl::RlError;
use bwe_core::traces::TraceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Policy(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Emulation(#[from] EmuError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Training(#[from] RlError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Machine-readable category, printed with every error.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Policy(_) => "policy",
            Self::Trace(_) => "trace",
            Self::Emulation(_) => "emulation",
            Self::Data(_) => "data",
            Self::Training(_) => "training",
            Self::Evaluation(_) => "evaluation",
            Self::Io { .. } => "io",
        }
    }

    /// Process exit code; 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 3,
            Self::Policy(_) => 4,
            Self::Trace(_) => 5,
            Self::Emulation(_) => 6,
            Self::Data(_) => 7,
            Self::Training(_) => 8,
            Self::Evaluation(_) => 9,
            Self::Io { .. } => 10,
        }
    }
}
