use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("non-finite function value at finite-difference probe {index}")]
    NonFiniteProbe { index: usize },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("split would leave class {class} empty in one part")]
    EmptyPart { class: usize },

    #[error("bad distance matrix: {0}")]
    BadMatrix(String),

    #[error("initial pair {pair} coincides; contraction ratio undefined")]
    ZeroGap { pair: usize },

    #[error("class {0} is missing from one of the measures")]
    MissingClass(usize),

    #[error("non-finite outer gradient after {} traced values", partial_trace.len())]
    NonFiniteGradient { partial_trace: Vec<f64> },

    #[error("class {class} has {available} points, {needed} required")]
    InsufficientClassPoints {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("target {eps0} is not above the fitted floor {floor}")]
    InfeasibleTarget { eps0: f64, floor: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
