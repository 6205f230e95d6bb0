use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An index, shape or value passed by the caller is out of range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A learner parameter would push the dynamics outside their domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A Monte-Carlo estimate did not meet its quality threshold.
    #[error("estimation quality: {0}")]
    EstimationQuality(String),

    /// The empirical chain has more than one closed communicating class,
    /// so its stationary distribution is not unique.
    #[error("empirical chain has {} closed classes: {}", .closed.len(), format_classes(.closed))]
    ReducibleChain {
        closed: Vec<Vec<String>>,
        classes: Vec<Vec<String>>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_classes(classes: &[Vec<String>]) -> String {
    classes
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

pub type Result<T> = std::result::Result<T, Error>;
