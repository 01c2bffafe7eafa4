use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes across the suite. Validation-level variants map to CLI
/// exit code 1, runtime-level ones to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain constraint violated: {what}")]
    Domain { what: String },

    #[error("inadmissible argument for {variant}: {constraint}")]
    Admissibility { variant: &'static str, constraint: String },

    #[error("jet outside the admissible set: {what}")]
    JetOutsideU { what: String },

    #[error("degenerate matrix: {what}")]
    Degenerate { what: String },

    #[error("root finding failed: {what}")]
    RootFind { what: String },

    #[error("ellipticity lost: {what}")]
    Ellipticity { what: String },

    #[error("range condition violated: {what}")]
    RangeCondition { what: String },

    #[error("linear solve failed: {what}")]
    LinearSolve { what: String },

    #[error("Newton line search stalled: {what}")]
    LineSearchStall { what: String },

    #[error("continuation failed: {what}")]
    Continuation { what: String },

    #[error("configuration error: {what}")]
    Config { what: String },

    #[error("missing artifact: {what}")]
    MissingArtifact { what: String },

    #[error("verification failed: {what}")]
    Verification { what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(what: impl Into<String>) -> Self {
        Error::Domain { what: what.into() }
    }

    pub fn config(what: impl Into<String>) -> Self {
        Error::Config { what: what.into() }
    }

    /// True for errors that indicate invalid input/configuration rather
    /// than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Admissibility { .. }
                | Error::Config { .. }
                | Error::RangeCondition { .. }
                | Error::MissingArtifact { .. }
                | Error::Verification { .. }
        )
    }
}
