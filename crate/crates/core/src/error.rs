use thiserror::Error;

/// Errors raised by the laboratory. Each variant maps onto a stable process
/// exit code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("curve is not elliptic: det(M_i - M_j) = {det:.3e} <= 0 for sample pair ({i}, {j})")]
    NotElliptic { i: usize, j: usize, det: f64 },

    #[error("rank-one connection found between parameters {t1:.12} and {t2:.12} (ratio {ratio:.3e})")]
    RankOneFound { t1: f64, t2: f64, ratio: f64 },

    #[error("conformal projection is not injective on samples ({i}, {j})")]
    InjectivityFailure { i: usize, j: usize },

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("componentwise extension cannot certify k < 1: measured k = {k_measured:.6} >= 1/sqrt(2)")]
    ExtensionObstruction { k_measured: f64 },

    #[error("extension failed: {0}")]
    ExtensionFailed(String),

    #[error("fixed-point iteration did not contract after {iterations} steps (residual {residual:.3e})")]
    ContractionViolation { iterations: usize, residual: f64 },

    #[error("monotonicity failed: quotient {quotient:.3e} at pair {a:?}, {b:?}")]
    MonotonicityFailed { quotient: f64, a: [f64; 2], b: [f64; 2] },

    #[error("solver stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("parameter excluded: {0}")]
    ParameterExcluded(String),

    #[error("could not build the reparametrization: best margin {margin:.3e}")]
    RhoConstructionFailed { margin: f64 },

    #[error("3x3 curve is not elliptic near theta = {theta:.12} (sigma2 = {sigma2:.3e})")]
    EllipticityFailed { theta: f64, sigma2: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotElliptic { .. } | Error::EllipticityFailed { .. } => 2,
            Error::RankOneFound { .. } => 3,
            Error::SolverStalled { .. } => 4,
            Error::ExtensionObstruction { .. }
            | Error::ExtensionFailed(_)
            | Error::MonotonicityFailed { .. }
            | Error::ContractionViolation { .. } => 5,
            Error::InvalidArgument(_) | Error::Parse(_) => 64,
            Error::InjectivityFailure { .. }
            | Error::DegenerateCurve(_)
            | Error::ParameterExcluded(_)
            | Error::RhoConstructionFailed { .. } => 65,
            Error::Io(_) => 74,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
