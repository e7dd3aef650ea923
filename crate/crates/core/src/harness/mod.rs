//! File formats and the experiment runner behind the `gfo` binary.
//!
//! Exit codes: 0 when every requested feasibility check passes, 1 when one
//! fails, 2 for unreadable or invalid input, 3 for numerical failures.

pub mod io;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{load_bmi, load_lp, load_scenario, load_scenario_file, LoadedLp, ScenarioFile};
pub use run::{run, Cli, Command, RunOutcome, RunReport, SolverKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Dimension {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Invalid { path: PathBuf, source: crate::Error },

    #[error(transparent)]
    Core(#[from] crate::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        use crate::Error as E;
        match self {
            Self::Io { .. }
            | Self::Parse { .. }
            | Self::Dimension { .. }
            | Self::Invalid { .. } => EXIT_INPUT,
            Self::Core(E::Dimension(_) | E::InvalidArgument(_)) => EXIT_INPUT,
            Self::Core(_) => EXIT_NUMERIC,
        }
    }
}
