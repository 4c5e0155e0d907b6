use std::fmt;

/// Errors surfaced by topology validation, the engines, and the analytic
/// calculators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability was outside `[0, 1)`; links with p = 1 are rejected.
    InvalidProbability(String),
    /// Structural problem in a topology description.
    InvalidTopology(String),
    /// A correlation group violated its invariants.
    InvalidGroup(String),
    /// Routing allocation does not match the number of paths or the block size.
    AllocationMismatch(String),
    /// The success-count distribution puts all mass on zero successes.
    AllLinksFail,
    /// A requested operation needs a different topology kind.
    UnsupportedTopology(String),
    /// Concentration window is degenerate for the requested parameters.
    DegenerateWindow(String),
    /// Routing shares are non-integral and rounding was not requested.
    NonIntegralShares(String),
    /// An argument was out of the documented domain.
    InvalidArgument(String),
    /// A simulation exceeded its horizon safety cap.
    HorizonExhausted(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidProbability(msg) => write!(f, "invalid probability: {msg}"),
            Error::InvalidTopology(msg) => write!(f, "invalid topology: {msg}"),
            Error::InvalidGroup(msg) => write!(f, "invalid group: {msg}"),
            Error::AllocationMismatch(msg) => write!(f, "allocation mismatch: {msg}"),
            Error::AllLinksFail => write!(f, "all links fail almost surely"),
            Error::UnsupportedTopology(msg) => write!(f, "unsupported topology: {msg}"),
            Error::DegenerateWindow(msg) => write!(f, "window degenerate: {msg}"),
            Error::NonIntegralShares(msg) => write!(f, "non-integral shares: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::HorizonExhausted(msg) => write!(f, "horizon exhausted: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
