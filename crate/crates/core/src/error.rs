use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("twist matrix is singular at step {step} (|det| = {det:.3e}, scale = {scale:.3e})")]
    SingularTwist { step: usize, det: f64, scale: f64 },
    #[error("point outside chart domain: {0}")]
    DomainError(String),
    #[error("coincident points at step {0}")]
    CoincidentPoints(usize),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian (smallest singular value {smallest:.3e})")]
    SingularJacobian { smallest: f64 },
    #[error("boundary value problem has conjugate points on step {0}")]
    ConjugatePoints(usize),
    #[error("G_{0} is singular")]
    ConditionAFailed(usize),
    #[error("sum of inverse G matrices is singular")]
    ConditionBFailed,
    #[error("generalized unit eigenspace has dimension {found}, expected {expected}")]
    ExcessDegeneracy { expected: usize, found: usize },
    #[error("symmetry subspace is not isotropic (defect {0:.3e})")]
    NonIsotropic(f64),
    #[error("symmetry check failed: {0}")]
    SymmetryViolation(String),
    #[error("G matrix degenerate at the given points")]
    DegenerateG,
    #[error("no critical point of the reduction function")]
    NoCriticalPoint,
    #[error("orbit is not reversible")]
    NotReversible,
    #[error("theorem violation: {0}")]
    TheoremViolation(String),
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("log(rho)/tau lies within {distance:.3e} of the spectrum of the connection")]
    SpectralClash { distance: f64 },
    #[error("truncated determinant did not stabilize up to N = {0}")]
    NotStabilized(usize),
    #[error("invalid homogeneity degree {0}")]
    InvalidDegree(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
