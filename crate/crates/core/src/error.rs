use thiserror::Error;

/// Errors surfaced by every module of the crate.
///
/// The variants map onto distinct CLI exit codes, so keep the split between
/// configuration, state and numerical failures intact.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    Shape {
        layer: usize,
        kind: &'static str,
        detail: String,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("scene placement failed: {0}")]
    Placement(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("pretraining failed to separate classes: {0}")]
    Pretraining(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
