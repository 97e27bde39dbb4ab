use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::qp::QpError;

/// Errors from controller design, online solves and simulation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("terminal set is empty: {0}")]
    EmptyTerminalSet(String),
    #[error("terminal facet set is not invariant: contraction {contraction:.6} exceeds inscribed ratio {ratio:.6}")]
    TerminalSetNotInvariant { contraction: f64, ratio: f64 },
    #[error("{stage} problem infeasible at step {step}")]
    Infeasible { stage: &'static str, step: usize },
    #[error("{stage} solver stopped without a certified optimum at step {step} (KKT residual {residual:e})")]
    NotOptimal { stage: &'static str, step: usize, residual: f64 },
    #[error("alpha horizon N_alpha reached its cap {cap} without a feasible high-level problem")]
    AlphaHorizonExhausted { cap: usize },
}

impl Error {
    /// Infeasibility and broken standing assumptions, as opposed to bad input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::AlphaHorizonExhausted { .. }
                | Error::EmptyTerminalSet(_)
                | Error::TerminalSetNotInvariant { .. }
                | Error::NotOptimal { .. }
                | Error::Model(ModelError::AssumptionFailed { .. })
        )
    }
}
