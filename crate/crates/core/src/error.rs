use thiserror::Error;

/// Errors raised across the simulator, model and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("invalid qubit index {index} for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("qubit {0} used more than once")]
    DuplicateQubit(usize),

    #[error("too many qubits: {0} (limit {1})")]
    TooManyQubits(usize, usize),

    #[error("parameter vector has length {got}, circuit expects {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("data vector has length {got}, circuit expects at least {expected}")]
    DataLength { expected: usize, got: usize },

    #[error("input outside the model domain: {0}")]
    Domain(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("gate has no two-term parameter-shift rule; use finite differences")]
    NoShiftRule,

    #[error("unsupported construction: {0}")]
    Unsupported(String),

    #[error("non-finite loss at iteration {iter}: {loss}")]
    NonFiniteLoss { iter: usize, loss: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
