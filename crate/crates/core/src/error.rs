use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Likelihood maximization failed; the message carries optimizer diagnostics.
    #[error("fit failed: {0}")]
    Fit(String),

    #[error("covariance estimation failed at location {location}: {reason}")]
    Covariance { location: usize, reason: String },

    #[error("test statistic for set {set:?} failed: {reason}")]
    Test { set: Vec<usize>, reason: String },

    #[error("model selection failed: {0}")]
    Selection(String),

    /// An error raised while processing a particular hypothesis set.
    #[error("target {target:?}: {source}")]
    Target {
        target: Vec<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn for_target(self, target: &[usize]) -> Error {
        Error::Target {
            target: target.to_vec(),
            source: Box::new(self),
        }
    }
}
