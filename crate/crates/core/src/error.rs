use thiserror::Error;

/// Errors raised by the geometry, solver and thermodynamic layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiracError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("degenerate constraint: coefficient matrix has rank {rank} < {rows} constraints")]
    DegenerateConstraint { rank: usize, rows: usize },

    #[error("curve is not a section: time derivative is {t_dot}, expected 1")]
    NonSection { t_dot: f64 },

    #[error("velocity Hessian is singular on the regular block (not hyperregular)")]
    NotHyperregular,

    #[error("Legendre inversion did not converge in {iterations} iterations (residual {residual:e})")]
    LegendreDivergence { iterations: usize, residual: f64 },

    #[error("Newton did not converge at step {step} after {iterations} iterations (scaled residual {residual:e})")]
    NewtonDivergence { step: usize, iterations: usize, residual: f64 },

    #[error(
        "singular step Jacobian at step {step}: the implicit system is degenerate for this \
         Lagrangian; use the reduced thermodynamic path for degenerate thermodynamic Lagrangians"
    )]
    SingularJacobian { step: usize },

    #[error("non-positive temperature {value} at t = {t}")]
    NonPositiveTemperature { t: f64, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("formulation not admissible: {0}")]
    Inadmissible(String),
}

pub type Result<T> = std::result::Result<T, DiracError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(DiracError::DimensionMismatch { what, expected, got });
    }
    Ok(())
}
