use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scenario or option value violates its invariant. `path` names the
    /// offending field, e.g. `tiers[1].density`.
    #[error("invalid value at `{path}`: {reason}")]
    Invalid { path: String, reason: String },

    #[error("path-loss exponent must exceed 2, got {0}")]
    PathLossExponent(f64),

    #[error("allocation is not feasible: {0}")]
    Allocation(String),

    #[error("target association for tier {tier} is zero; it would need a zero bias")]
    ZeroTarget { tier: usize },

    #[error("equal-fractions closed form requires the mean-load model")]
    ClosedFormNeedsMeanLoad,

    #[error("brute-force search refused: {0}")]
    GridTooLarge(String),

    #[error("failed to read `{path}`: {reason}")]
    Io { path: String, reason: String },

    #[error("failed to parse `{path}` at `{field}`: {reason}")]
    Parse {
        path: String,
        field: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
