//! Dense linear algebra and the control-theoretic solvers built on it.

mod decomp;
mod expm;
mod matrix;
mod stability;

pub use decomp::{cholesky, is_positive_definite, lower_triangular_inverse, is_positive_semidefinite, qr_pivoted_rdiag, Lu, PivotedLdl};
pub use expm::{mat_exp, zoh_discretize};
pub use matrix::{dot, norm2, norm_inf, vec_add, vec_sub, Matrix};
pub use stability::{
    check_no_unit_invariant_zero, check_pbh_stabilizable_velocity, dare_residual, is_schur_stable,
    lyapunov_residual, rank_with_tolerance, solve_dare_gain, solve_dare_gain_with, solve_discrete_lyapunov,
    steady_state_matrix, velocity_pbh_matrix, DareOptions, StabilityReport, RANK_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("matrix is numerically singular")]
    Singular,
    #[error("matrix is not Schur stable")]
    NotSchurStable,
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
