use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside coded range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("step {step}, dim {dim}: {source}")]
    AtIndex {
        step: usize,
        dim: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid probability vector: {0}")]
    InvalidProbs(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}: non-finite objective")]
    Diverged { epoch: usize },

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("missing profile `{0}` in checkpoint set")]
    MissingProfile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at(self, step: usize, dim: usize) -> Self {
        Error::AtIndex {
            step,
            dim,
            source: Box::new(self),
        }
    }
}
