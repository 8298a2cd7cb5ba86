use thiserror::Error;

/// Failures reported by a language-model provider.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("context of {len} tokens exceeds the provider cap of {cap}")]
    ContextOverflow { len: usize, cap: usize },
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("model returned no tokens")]
    GenerationEmpty,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no position has a positive long-short gap")]
    NoKeyTokens,
    #[error("key position {key_position} has no remote prefix")]
    EmptyRemotePrefix { key_position: usize },
    #[error("no candidate segment improves on the baseline for key position {key_position}")]
    NoImprovingSegment { key_position: usize },
    #[error("document already contains a recap tag literal")]
    TagLiteralInInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
