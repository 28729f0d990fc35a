use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("unknown node id {0}")]
    UnknownNode(u32),
    #[error("nodes {0} and {1} share a position")]
    DuplicatePosition(usize, usize),
    #[error("cannot parse scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] basehop_core::Error),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
