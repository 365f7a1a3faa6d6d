use thiserror::Error;

/// Error taxonomy shared by every module.
///
/// `Underflow` is separated from `InvalidArgument` because callers are
/// expected to map it to a distinct process exit code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KaonError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// p or q vanished; the mass eigenbasis no longer spans the state space.
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    /// Survival probability fell below 1e-300; conditioning on survival
    /// would divide by (effectively) zero.
    #[error("numeric underflow: {0}")]
    Underflow(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, KaonError>;
