use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite objective value while probing coordinate {coord}")]
    NonFiniteEval { coord: usize },

    #[error("training set contains a single class ({0}); both slip and non-slip samples are required")]
    SingleClass(String),

    #[error("model file format_version {found} is unsupported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("model file kind `{found}` does not match expected `{expected}`")]
    KindMismatch { found: String, expected: String },

    #[error("model tensor `{0}` is missing")]
    MissingTensor(String),

    #[error("model tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
