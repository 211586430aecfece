//! Error type shared by every stage of the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh input: {0}")]
    Mesh(String),

    #[error("invalid material: {0}")]
    Material(String),

    #[error("element {element} is degenerate (signed area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("subdomain {subdomain}: {reason}")]
    Subdomain { subdomain: usize, reason: String },

    #[error("solver breakdown at iteration {iteration}: q^T w = {value:e}")]
    Breakdown { iteration: usize, value: f64 },

    #[error("negative algebraic error term r^T z = {0:e}")]
    NegativeAlgebraicTerm(f64),

    #[error("interface reactions are not balanced (assembled residual {0:e})")]
    Unbalanced(f64),

    #[error("cyclic kernel basis has dependent columns")]
    SingularKernel,

    #[error("interface segment {0} has zero length")]
    ZeroLengthSegment(usize),

    #[error("star patch at node {node}: inconsistent right-hand side (residual {residual:e})")]
    InconsistentPatch { node: usize, residual: f64 },

    #[error("element {element}: traction set fails vertex moment check (residual {residual:e})")]
    ElementEquilibrium { element: usize, residual: f64 },

    #[error("admissibility check failed: {0}")]
    Admissibility(String),

    #[error("mismatched iteration provenance: stress recovered at iteration {stress}, state at iteration {state}")]
    Provenance { stress: usize, state: usize },

    #[error("refined problem needs {needed} dofs, budget is {budget}")]
    DofBudget { needed: usize, budget: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category used for reporting and process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Solver,
    Admissibility,
    Other,
}

impl FailureClass {
    pub fn exit_code(self) -> u8 {
        match self {
            Self::Config => 2,
            Self::Solver => 3,
            Self::Admissibility => 4,
            Self::Other => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::Solver => "solver",
            Self::Admissibility => "admissibility",
            Self::Other => "error",
        }
    }
}

impl Error {
    pub fn class(&self) -> FailureClass {
        match self {
            Error::Mesh(_)
            | Error::Material(_)
            | Error::Config(_)
            | Error::DegenerateElement { .. } => FailureClass::Config,
            Error::Factorization(_)
            | Error::Subdomain { .. }
            | Error::Breakdown { .. }
            | Error::NegativeAlgebraicTerm(_)
            | Error::DofBudget { .. } => FailureClass::Solver,
            Error::Unbalanced(_)
            | Error::SingularKernel
            | Error::ZeroLengthSegment(_)
            | Error::InconsistentPatch { .. }
            | Error::ElementEquilibrium { .. }
            | Error::Admissibility(_)
            | Error::Provenance { .. } => FailureClass::Admissibility,
            Error::Io(_) => FailureClass::Other,
        }
    }
}
