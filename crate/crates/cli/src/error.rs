use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("capacity error: {0}")]
    Capacity(bandperm::Error),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Model(bandperm::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<bandperm::Error> for CliError {
    fn from(e: bandperm::Error) -> Self {
        match e {
            bandperm::Error::Capacity { .. } => CliError::Capacity(e),
            bandperm::Error::InvalidConfig(ref m) => CliError::config("sampler", m.clone()),
            bandperm::Error::InvalidParams(ref m) => CliError::config("params", m.clone()),
            other => CliError::Model(other),
        }
    }
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::Config { key, .. } => Some(key),
            _ => None,
        }
    }

    /// 2 configuration, 3 capacity, 4 verification failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Capacity(_) => 3,
            CliError::Verification(_) => 4,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "configuration",
            CliError::Capacity(_) => "capacity",
            CliError::Verification(_) => "verification",
            CliError::Model(bandperm::Error::NoData(_)) => "no-data",
            CliError::Model(bandperm::Error::Unfittable(_)) => "unfittable",
            CliError::Model(_) => "model",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let Some(key) = self.key() {
            v["key"] = json!(key);
        }
        v
    }
}
