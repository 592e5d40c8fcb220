use thiserror::Error;

/// Errors raised by constructors, checkers and file loaders.
///
/// Iterative solvers never fail with an error for running out of budget;
/// they return their best iterate and flag the outcome in the report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("column {col} has norm {norm}, expected 1")]
    NonUnitColumn { col: usize, norm: f64 },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("direction is not tangent: column {col} has x_j.d_j = {inner}")]
    NotTangent { col: usize, inner: f64 },
    #[error("objective returned a non-finite value")]
    NonFiniteObjective,
    #[error("penalty curvature is singular (p < 1 with zeta + eps = 0)")]
    SingularCurvature,
    #[error("point is not feasible: zeta_2 = {zeta}")]
    NotFeasible { zeta: f64 },
    #[error("base column {col} has no positive entry")]
    InfeasibleSupport { col: usize },
    #[error("column {col} of the sign pattern is empty")]
    EmptyColumnSupport { col: usize },
    #[error("Gram matrix is singular even after regularization")]
    SingularGram,
    #[error("bad labels: {0}")]
    BadLabels(String),
    #[error("column {col} is zero")]
    ZeroColumn { col: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
