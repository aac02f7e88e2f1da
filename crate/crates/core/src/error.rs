use thiserror::Error;

/// Errors raised by the matrix kernel, the channel model and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("invalid dimensions for {field}: {detail}")]
    InvalidDimensions { field: &'static str, detail: String },

    #[error("noise covariance {field} is not positive definite")]
    NoiseNotPd { field: &'static str },

    #[error("{field} is not Hermitian")]
    FieldNotHermitian { field: &'static str },

    #[error("{field} contains non-finite entries")]
    NonFinite { field: &'static str },

    #[error("power {field} must be strictly positive and finite, got {value}")]
    NonpositivePower { field: &'static str, value: f64 },

    #[error("perturbation epsilon must be strictly positive, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("{field} is not invertible (condition number {condition:e})")]
    GainNotInvertible { field: &'static str, condition: f64 },

    #[error("instance is not square: N_S={n_s}, N_R={n_r}, N_D={n_d}")]
    NotSquare { n_s: usize, n_r: usize, n_d: usize },

    #[error("{field} is not diagonal")]
    NotDiagonal { field: &'static str },

    #[error("input parameters are infeasible: {0}")]
    InfeasibleParams(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("solver did not converge (best value found {best:.6} bits)")]
    SolverNotConverged { best: f64 },

    #[error("KKT multipliers infeasible: {0}")]
    KktInfeasible(String),

    #[error("certificate does not reproduce the numerical optimum (residual {residual:e})")]
    CertificateMismatch { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error in {field}: {detail}")]
    Validation { field: String, detail: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverNotConverged { .. } | Error::KktInfeasible(_) => 3,
            Error::CertificateMismatch { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    /// Short machine-readable code for result records and CSV rows.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::InvalidDimensions { .. } => "invalid_dimensions",
            Error::NoiseNotPd { .. } => "noise_not_pd",
            Error::FieldNotHermitian { .. } => "not_hermitian",
            Error::NonFinite { .. } => "non_finite",
            Error::NonpositivePower { .. } => "nonpositive_power",
            Error::NonpositiveEpsilon(_) => "nonpositive_epsilon",
            Error::GainNotInvertible { .. } => "gain_not_invertible",
            Error::NotSquare { .. } => "not_square",
            Error::NotDiagonal { .. } => "not_diagonal",
            Error::InfeasibleParams(_) => "infeasible_params",
            Error::InvalidConfig(_) => "invalid_config",
            Error::SolverNotConverged { .. } => "solver_not_converged",
            Error::KktInfeasible(_) => "kkt_infeasible",
            Error::CertificateMismatch { .. } => "certificate_mismatch",
            Error::Parse(_) => "parse_error",
            Error::Validation { .. } => "validation_error",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
