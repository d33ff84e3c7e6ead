use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` names the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// Input data violated a record invariant. `row` is 1-based and counts data rows only.
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is rank deficient; column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(row: usize, message: impl Into<String>) -> Self {
        Error::Data {
            row,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 configuration, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Toml(_) => 1,
            Error::Data { .. }
            | Error::Input(_)
            | Error::RankDeficient { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Invariant(_) => 3,
            Error::Context { source, .. } => source.exit_code(),
        }
    }
}
