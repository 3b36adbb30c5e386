use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or invalid configuration; `key` is the dotted config path.
    #[error("config error at \"{key}\": {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Core(#[from] rbdsde_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

/// Attributes a core error raised while building an input to its config key.
pub(crate) trait AtKey<T> {
    fn at_key(self, key: &str) -> Result<T>;
}

impl<T> AtKey<T> for rbdsde_core::Result<T> {
    fn at_key(self, key: &str) -> Result<T> {
        self.map_err(|e| CliError::config(key, e.to_string()))
    }
}
