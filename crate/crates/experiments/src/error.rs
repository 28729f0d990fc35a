use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace file {path}: {source}")]
    Trace {
        path: String,
        #[source]
        source: basehop_core::Error,
    },
    #[error("spec parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] basehop_core::Error),
    #[error(transparent)]
    Protocol(#[from] basehop_protocol::ProtocolError),
    #[error("instance generation failed: {0}")]
    Instance(String),
}

impl ExperimentError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
