use thiserror::Error;

/// Every failure the library can report.
///
/// Validation problems map to exit code 2 in the CLI and numerical
/// failures to exit code 3, see [`Error::is_validation`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no sign change of the nullcline equation in [{lo}, {hi}]")]
    RootBracketFailure { lo: f64, hi: f64 },
    #[error("no v* with F'(v*) < -3 in the search window (AdEx needs a > 3)")]
    NoSeparatrix,
    #[error("margin must be positive, got {0}")]
    InvalidMargin(f64),
    #[error("degenerate window [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("trajectory crossed below the separatrix at (v, w) = ({v}, {w})")]
    LeftDomain { v: f64, w: f64 },
    #[error("no jump before the horizon {0}")]
    HorizonExceeded(f64),
    #[error("reset point (v_r, v_r) is an equilibrium for current {0}")]
    ResetIsEquilibrium(f64),
    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("spike watchdog: {count} spikes within one time unit before t = {t}")]
    BlowUpCascade { t: f64, count: usize },
    #[error("no root of the stationary residual for J = {j}")]
    NoRoot { j: f64 },
    #[error("jump cap of {0} reached before the horizon")]
    JumpCap(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidMargin(_)
                | Error::InvalidWindow(..)
                | Error::InvalidModel(_)
                | Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::NoSeparatrix
                | Error::ResetIsEquilibrium(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
