use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("environment stepped after episode end; call reset first")]
    EpisodeFinished,

    #[error("action {action} out of range for {action_count} actions")]
    InvalidAction { action: usize, action_count: usize },

    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    #[error("index {index} out of range for {len} entries")]
    OutOfRange { index: usize, len: usize },

    #[error("non-finite TD loss {loss} at train step {train_step}")]
    NonFiniteLoss { loss: f64, train_step: u64 },

    #[error("training failed at epoch {epoch}, arm {arm}, env step {step}: {source}")]
    Training {
        epoch: usize,
        arm: usize,
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config serialize: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
