use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid theta matrix: {0}")]
    InvalidTheta(String),

    #[error("theta mismatch between operands")]
    ThetaMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not invertible at this truncation (condition estimate {condition:.3e})")]
    NotInvertible { condition: f64 },

    #[error("inverse residual {residual:.3e} exceeds tolerance {tol:.3e} at cutoff {cutoff}; increase the cutoff")]
    TailTruncation { residual: f64, tol: f64, cutoff: usize },

    #[error("evaluation failed at {path}: {source}")]
    Eval { path: String, source: Box<Error> },

    #[error("lambda is unbound in a parametric symbol")]
    UnboundLambda,

    #[error("scalar_power applied to a non-scalar subtree")]
    NotScalar,

    #[error("power branch cut: {0}")]
    Branch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not elliptic at sample xi = {xi:?}")]
    NotElliptic { xi: Vec<f64> },

    #[error("not elliptic with parameter: {0}")]
    NotEllipticWithParameter(String),

    #[error("interpolant construction failed: worst lattice point {point:?} with value {value:.3e}")]
    Interpolant { point: Vec<i64>, value: f64 },

    #[error("margin {margin} must be smaller than cutoff {cutoff}")]
    Margin { margin: usize, cutoff: usize },

    #[error("fit window too small ({size} samples); use a larger cutoff")]
    FitWindow { size: usize },

    #[error("{} of {} samples failed: first failure at lambda = {first_lambda}: {first_error}", failures, total)]
    PartialFit {
        failures: usize,
        total: usize,
        first_lambda: Complex64,
        first_error: String,
    },

    #[error("contour integral diverges: tail exponent {exponent} must be < -1")]
    Divergent { exponent: f64 },

    #[error("quadrature error estimate {estimate:.3e} exceeds tolerance {tol:.3e}")]
    Precision { estimate: f64, tol: f64 },

    #[error("lambda = {lambda} is within {distance:.3e} of the spectrum")]
    NearSpectrum { lambda: Complex64, distance: f64 },

    #[error("eigenvalue {eigenvalue} lies on the requested ray")]
    EigenvalueOnRay { eigenvalue: Complex64 },

    #[error("lambda = {0} lies outside the parameter domain")]
    OutsideDomain(Complex64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigensolver failed to converge")]
    Eigensolver,

    #[error("operator is not normal (off-diagonal Schur mass {0:.3e})")]
    NotNormal(f64),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn at(self, path: impl Into<String>) -> Error {
        match self {
            Error::Eval { path: inner, source } => Error::Eval {
                path: format!("{}/{}", path.into(), inner),
                source,
            },
            other => Error::Eval {
                path: path.into(),
                source: Box::new(other),
            },
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
