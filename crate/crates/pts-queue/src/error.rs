//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Error`]. The CLI maps error
//! classes onto stable process exit codes: bad input/config -> 2, degenerate
//! estimation results -> 3, numerical failures -> 4.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed configuration text. `line` is 1-based.
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Invalid model construction arguments (grids, profiles, kernels, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Malformed input data (CSV rows, observation sequences, ...).
    #[error("invalid input{}: {msg}", fmt_loc(.path, .line))]
    InvalidInput { path: Option<PathBuf>, line: Option<usize>, msg: String },

    /// Two trajectories imply an arrival on the same step; the binary arrival
    /// model cannot represent that.
    #[error("two trajectories map to an arrival at step {step} (vehicles {first} and {second})")]
    ArrivalCollision { step: usize, first: String, second: String },

    /// Probability mass pushed past the queue-length cap during a transition.
    #[error("pmf mass {lost:.3e} would leave the queue cap {k_max} at step {step}")]
    TruncationOverflow { step: usize, k_max: usize, lost: f64 },

    /// The simulated queue outgrew the physical link.
    #[error("simulated queue spilled past the link at step {step}: {queue} vehicles need {needed_m:.1} m of {link_m:.1} m")]
    SaturationOverflow { step: usize, queue: u32, needed_m: f64, link_m: f64 },

    /// An estimation routine produced nothing usable (all-impossible grid,
    /// too few effective samples for an interval, non-converging optimizer).
    #[error("degenerate result: {0}")]
    Degenerate(String),

    /// A numerical routine failed (non-finite values, Cholesky breakdown, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Brute-force reference routines refuse horizons they cannot enumerate.
    #[error("horizon {horizon} too large for exhaustive enumeration (max {max})")]
    HorizonTooLarge { horizon: usize, max: usize },

    #[error("i/o error{}: {source}", fmt_loc(.path, &None))]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_loc(path: &Option<PathBuf>, line: &Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!(" ({}:{l})", p.display()),
        (Some(p), None) => format!(" ({})", p.display()),
        (None, Some(l)) => format!(" (line {l})"),
        (None, None) => String::new(),
    }
}

impl Error {
    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidParam(_)
            | Error::InvalidInput { .. }
            | Error::ArrivalCollision { .. }
            | Error::Io { .. } => 2,
            Error::Degenerate(_) | Error::HorizonTooLarge { .. } => 3,
            Error::TruncationOverflow { .. }
            | Error::SaturationOverflow { .. }
            | Error::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: Some(path.into()), source }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}
