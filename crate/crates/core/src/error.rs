use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {component} at t = {t}")]
    EvaluationDomain { t: f64, component: String },

    #[error("unknown problem '{name}' (available: {available})")]
    UnknownProblem { name: String, available: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("t = {t} outside the domain [{lo}, {hi}]")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("KKT system singular after regularization reached {regularization:e}")]
    SolverBreakdown { regularization: f64 },

    #[error(
        "constraint Jacobian is rank deficient (sigma_min(J J^T) = {sigma_min:e}, scale {scale:e})"
    )]
    ConstraintQualification { sigma_min: f64, scale: f64 },

    #[error(
        "discrete KKT matrix is numerically singular (sigma_min = {sigma_min:e}, norm {norm:e})"
    )]
    StrongRegularity { sigma_min: f64, norm: f64 },

    #[error("strengthened Legendre condition fails: min eigenvalue of H_uu = {rho:e}")]
    LegendreViolation { rho: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
