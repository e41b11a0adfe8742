use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed PGM header: {0}")]
    PgmHeader(String),

    #[error("malformed PGM payload: {0}")]
    PgmPayload(String),

    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    PgmTruncated { expected: usize, found: usize },

    #[error("unsupported maxval {0}: only maxval <= 255 is supported")]
    PgmMaxval(u32),

    #[error("image dimensions {0}x{1} do not match {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("bad container magic {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    #[error("container length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("malformed {kind} file: {detail}")]
    SpecParse { kind: &'static str, detail: String },

    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    TrainingDiverged { epoch: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether this error stems from bad caller-supplied parameters rather
    /// than from bad data on disk. The CLI maps the former to exit code 1
    /// and the latter to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}
