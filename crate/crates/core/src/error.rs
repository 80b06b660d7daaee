use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("operation not supported for this model: {0}")]
    Unsupported(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    /// The chain sits at a state with zero estimated likelihood.
    #[error("chain state has zero likelihood estimate")]
    ZeroLikelihoodState,

    #[error("elliptical slice sampler did not terminate after {0} shrinkage steps")]
    SliceShrinkage(usize),

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
