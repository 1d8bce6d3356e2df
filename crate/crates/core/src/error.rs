use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("ambient dimension must be positive")]
    ZeroAmbient,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ambient dimension {0} is odd, so it cannot be split as V ⊕ V*")]
    OddAmbient(usize),

    #[error("two-form is not skew-symmetric (max |Ω + Ωᵀ| = {0:e})")]
    NotSkew(f64),

    #[error("not a Dirac structure: {0}")]
    NotDirac(String),

    #[error("push-forward is degenerate: image has dimension {found}, target needs {expected}")]
    DegenerateMap { expected: usize, found: usize },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("constraint rank varies across sample points: {0:?}")]
    RankVariation(Vec<usize>),

    #[error("inconsistent state: residual {residual:e} exceeds tolerance {tol:e}")]
    InconsistentState { residual: f64, tol: f64 },

    #[error(
        "Newton iteration failed to converge after {iterations} iterations (final residual {:e})",
        log.last().copied().unwrap_or(f64::NAN)
    )]
    NewtonDivergence { iterations: usize, log: Vec<f64> },

    #[error("singular Newton Jacobian (rank {rank} of {size}); deficient rows: {rows:?}")]
    SingularJacobian {
        rank: usize,
        size: usize,
        rows: Vec<String>,
    },

    #[error("unknown system '{0}'")]
    UnknownSystem(String),

    #[error("invalid parameter '{name}': {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
