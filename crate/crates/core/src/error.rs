use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong landmark count, non-finite values, bad stream order.
    #[error("input error: {0}")]
    Input(String),

    /// Two adjacent landmarks coincide, so a bone direction is undefined.
    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("non-finite loss at iteration {iteration} (epoch {epoch}, batch {batch}): {detail}")]
    NonFiniteLoss {
        iteration: usize,
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("empty media space")]
    EmptyMediaSpace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
