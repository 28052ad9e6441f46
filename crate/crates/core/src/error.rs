use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// `1 + λᵀg_i` fell below the feasibility margin, or no multiplier can
    /// satisfy the moment condition at all.
    #[error("infeasible: {0}")]
    InfeasibleBase(String),

    #[error("inner solve did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("no feasible beta found during outer search")]
    NoFeasibleBeta,

    #[error("solution did not converge; log-ratio undefined")]
    NotConverged,

    #[error("replication list is empty")]
    EmptyReplications,

    #[error("subset mask selects no observation")]
    EmptyMask,

    #[error("kernel weight row {0} is degenerate (bandwidth too small)")]
    DegenerateRow(usize),

    #[error("bad block length {m} for n = {n}")]
    BadBlockLen { m: usize, n: usize },

    #[error("bad theta: {0}")]
    BadTheta(String),

    #[error("external simulator failure: {0}")]
    ExternalFailure(String),

    #[error("{} replication(s) failed, first at index {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Replications(Vec<(usize, Error)>),

    #[error("initial point infeasible: {0}")]
    InitialPointInfeasible(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable, machine-readable category used for CLI exit reports and FFI codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InfeasibleBase(_) => "infeasible_base",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NoFeasibleBeta => "no_feasible_beta",
            Error::NotConverged => "not_converged",
            Error::EmptyReplications => "empty_replications",
            Error::EmptyMask => "empty_mask",
            Error::DegenerateRow(_) => "degenerate_row",
            Error::BadBlockLen { .. } => "bad_block_len",
            Error::BadTheta(_) => "bad_theta",
            Error::ExternalFailure(_) => "external_failure",
            Error::Replications(_) => "replications",
            Error::InitialPointInfeasible(_) => "initial_point_infeasible",
            Error::Parse { .. } => "parse",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        }
    }
}
