use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-length embedding (norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("at least two embeddings are required, got {0}")]
    TooFewEmbeddings(usize),

    #[error("invalid cluster count k={k} for {n} points")]
    BadK { k: usize, n: usize },

    #[error("embeddings are (anti)parallel, dot product {0}")]
    DegenerateParallel(f64),

    #[error("dot product {dot} is already at or below the rotation target {target}")]
    NoConflict { dot: f64, target: f64 },

    #[error("mention `{0}` has neither a gold entity id nor a stranger mark")]
    MissingGold(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corrupt knowledge base file: {0}")]
    CorruptKb(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for usage and configuration problems, 1 for bad
    /// data or I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidParam(_) | Error::Config(_) => 2,
            _ => 1,
        }
    }
}
