use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad category of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad user input: configuration, segment parameters, port maps.
    Config,
    /// Malformed or unsupported file contents.
    Format,
    /// The numerics cannot produce a trustworthy answer for valid input.
    Numeric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("frequency must be strictly positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("frequency grid is empty or degenerate: {0}")]
    EmptyGrid(String),
    #[error("segment length must be positive, got {0} m")]
    NegativeLength(f64),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("physical parameters disagree with declared values: {0}")]
    InconsistentPhysicalParams(String),
    #[error("non-propagating mode: {0}")]
    NonPropagatingMode(String),
    #[error("mode-coupling term of L*C is {0:e}; the pair has no usable coupled modes")]
    UncoupledDegenerate(f64),
    #[error("c- and pi-mode velocities coincide")]
    DegenerateVelocities,
    #[error("frequency grid too coarse for phase unwrapping: {0}")]
    GridTooCoarse(String),
    #[error("delta tau must be positive, got {0:e} s")]
    ZeroDeltaTau(f64),
    #[error("responses are defined on different frequency grids")]
    GridMismatch,
    #[error("segment cannot be synthesized: {0}")]
    Unsynthesizable(String),
    #[error("measured band {band:e} Hz covers fewer than two oscillation periods ({needed:e} Hz needed)")]
    InsufficientBandwidth { band: f64, needed: f64 },
    #[error("fit did not converge: {0}")]
    NonConvergent(String),
    #[error("template has {0} unknowns, at most 5 are supported")]
    OverParameterized(usize),
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unsupported network parameter '{0}', only S-parameters are supported")]
    UnsupportedParameter(String),
    #[error("frequencies must be strictly increasing (line {line})")]
    NonMonotoneFrequency { line: usize },
    #[error("bad port map: {0}")]
    BadPortMap(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            NonPositiveFrequency(_)
            | EmptyGrid(_)
            | NegativeLength(_)
            | InvalidSegment(_)
            | InconsistentPhysicalParams(_)
            | ZeroDeltaTau(_)
            | OverParameterized(_)
            | BadPortMap(_)
            | Config(_) => ErrorClass::Config,
            Syntax { .. } | UnsupportedParameter(_) | NonMonotoneFrequency { .. } => {
                ErrorClass::Format
            }
            NonPropagatingMode(_)
            | UncoupledDegenerate(_)
            | DegenerateVelocities
            | GridTooCoarse(_)
            | GridMismatch
            | Unsynthesizable(_)
            | InsufficientBandwidth { .. }
            | NonConvergent(_) => ErrorClass::Numeric,
        }
    }
}
