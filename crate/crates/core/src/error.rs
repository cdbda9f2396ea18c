use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("factorial of degree {0} overflows double precision; use the log-space variant")]
    FactorialOverflow(u32),
    #[error("exponent of variable {0} is zero; not decrementable")]
    NotDecrementable(u32),
    #[error("subtrahend is not dominated by the minuend")]
    NotDominated,
    #[error("invalid multiindex: {0}")]
    InvalidMultiindex(String),
    #[error("distribution is not standardized: {0}")]
    NotStandardized(String),
    #[error("moment horizon exceeded: order {requested} requested, {available} available")]
    MomentHorizon { requested: usize, available: usize },
    #[error("distribution kind `{0}` is not samplable")]
    NotSamplable(&'static str),
    #[error("invalid moment sequence: {0}")]
    InvalidMoments(String),
    #[error("degenerate basis element {0} used with a nonzero weight")]
    DegenerateBasis(String),
    #[error("incompatible coefficient spaces: {0}")]
    Incompatible(String),
    #[error("asymmetric tensor input")]
    Asymmetric,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operator is not elliptic: {0}")]
    NotElliptic(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("no real root on branch {0}")]
    NoRoot(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FactorialOverflow(_)
                | Error::DegenerateBasis(_)
                | Error::Singular(_)
                | Error::NoRoot(_)
                | Error::NoConvergence(_)
                | Error::InvalidMoments(_)
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

pub type Result<T> = std::result::Result<T, Error>;
