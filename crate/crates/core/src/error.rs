use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state stopped satisfying the uncertainty relation or another
    /// internal invariant; indicates a bug or numerically hostile input.
    #[error("physicality violation: {0}")]
    Physicality(String),

    /// A numerical routine failed to converge or produced garbage.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Requested distillation yield lies outside the feasible range.
    #[error("unreachable yield {requested}: feasible range is ({min:.6}, {max:.6}]")]
    UnreachableYield {
        requested: f64,
        min: f64,
        max: f64,
    },

    /// Bad or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
