use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^H| = {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (||UU^H - I||_F = {0:.3e})")]
    NotUnitary(f64),

    #[error("state vector is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("parameter vector has length {found}, ansatz expects {expected}")]
    ParamLength { expected: usize, found: usize },

    #[error("inconsistent cover group: {0}")]
    InconsistentGroup(String),

    #[error("nothing to sample: every term has zero spectral norm")]
    EmptyPlan,

    #[error("empty input")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
