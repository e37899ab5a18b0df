use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transfer matrix is not unitary (max |U^dagger U - I| = {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("transfer matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("mode index {0} listed more than once")]
    DuplicateMode(usize),

    #[error("state is not normalized (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("state leaves the d-rail code space: {0}")]
    OutsideCodeSpace(String),

    #[error("degenerate pair: both entries equal {0}")]
    DegeneratePair(usize),

    #[error("invalid dimension d = {0} (need d >= 2)")]
    InvalidDimension(usize),

    #[error("qudit index {index} out of range for {count} qudits")]
    QuditOutOfRange { index: usize, count: usize },

    #[error("qudit value {value} out of range for dimension {d}")]
    LevelOutOfRange { value: usize, d: usize },

    #[error("lemma precondition violated: {0}")]
    LemmaPrecondition(String),

    #[error("pattern cannot come from this circuit: {0}")]
    ImpossiblePattern(String),

    #[error("engine capacity exceeded: {0}")]
    Capacity(String),

    #[error("malformed register: {0}")]
    MalformedRegister(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
