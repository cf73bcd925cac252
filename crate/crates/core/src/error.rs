use thiserror::Error;

/// Diagnostics carried by a failed nonlinear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub residual_linf: f64,
    pub tau: f64,
}

#[derive(Debug, Error)]
pub enum WgfError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-admissible mesh: {0}")]
    NonAdmissibleMesh(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver failure: {message} (iterations {}, residual {:.3e}, tau {:.3e})", .diagnostics.iterations, .diagnostics.residual_linf, .diagnostics.tau)]
    SolverFailure { message: String, diagnostics: SolverDiagnostics },
}

impl WgfError {
    pub(crate) fn solver(message: impl Into<String>, iterations: usize, residual_linf: f64, tau: f64) -> Self {
        WgfError::SolverFailure {
            message: message.into(),
            diagnostics: SolverDiagnostics { iterations, residual_linf, tau },
        }
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(self, WgfError::SolverFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, WgfError>;
