//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numerical core. All constructors reject invalid
/// inputs eagerly so that downstream computations can assume their
/// invariants hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point or matrix had the wrong dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// A bump profile violated its invariants (e.g. zero amplitude).
    InvalidProfile(String),
    /// The linear map is singular or its cached data is inconsistent.
    InvalidMap(String),
    /// A Jordan block specification is invalid or inconsistent with the map.
    InvalidBlocks(String),
    /// Grid construction failed (bad spacing, budget exceeded, ...).
    InvalidGrid(String),
    /// An operation received an argument outside its domain.
    InvalidArgument(String),
    /// The iteration budget of a membership oracle or separation search was
    /// exhausted; usually indicates a misclassified block.
    BudgetExceeded(String),
    /// A time integration aborted; the payload reports the last valid time.
    SolverFailure { time: f64, reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidProfile(m) => write!(f, "invalid profile: {m}"),
            Error::InvalidMap(m) => write!(f, "invalid linear map: {m}"),
            Error::InvalidBlocks(m) => write!(f, "invalid block structure: {m}"),
            Error::InvalidGrid(m) => write!(f, "invalid grid: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::BudgetExceeded(m) => write!(f, "iteration budget exceeded: {m}"),
            Error::SolverFailure { time, reason } => {
                write!(f, "solver failure at t = {time}: {reason}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
