use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty signal: {0}")]
    EmptySignal(&'static str),
    #[error("length mismatch: {left} vs {right} samples ({context})")]
    LengthMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },
    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },
    #[error("all-zero signal not allowed: {0}")]
    ZeroSignal(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wav format: {property} is {actual}, expected {expected} ({path})")]
    WavFormat {
        property: &'static str,
        actual: String,
        expected: String,
        path: PathBuf,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("sample out of range ({value:.6}) when writing {path}")]
    SampleOutOfRange { value: f64, path: PathBuf },
    #[error("signal too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),
    #[error("no speech detected in signal: {0}")]
    NoSpeech(&'static str),
    #[error("quantizer: {0}")]
    Quantizer(String),
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("embedding dimension mismatch for key `{key}`: expected {expected}, got {got}")]
    EmbeddingDimension {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate embedding key `{0}`")]
    DuplicateKey(String),
    #[error("missing embedding key `{0}`")]
    MissingKey(String),
    #[error("malformed store file: {0}")]
    StoreFormat(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("training: {0}")]
    Training(String),
    #[error("analysis: {0}")]
    Analysis(String),
    #[error("io: {path}: {source}")]
    IoAt {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code for CLI reporting: 2 for data/input problems,
    /// 3 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::IoAt { .. } | Error::Training(_) | Error::Analysis(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }
}
