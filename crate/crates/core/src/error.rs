use thiserror::Error;

use crate::operator::CoercivityReport;
use crate::variational::MinimizeResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("field does not belong to this geometry")]
    GeometryMismatch,

    #[error("derivative order {order} out of range (max {max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("operation requires a ball geometry")]
    WrongGeometry,

    #[error("eigen solver failed: {0}")]
    EigenSolverFailure(String),

    #[error("operator is not coercive (Lambda = {:.6e})", .0.lambda)]
    NotCoercive(CoercivityReport),

    #[error("singular linear solve: {0}")]
    SingularSolve(String),

    #[error("no bracket for constraint root: {0}")]
    NoBracket(String),

    #[error("minimization did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.el_residual)]
    NoConvergence(Box<MinimizeResult>),

    #[error("nonpositive multiplier denominator {0:.6e}")]
    NonpositiveDenominator(f64),

    #[error("grid under-resolved: {0}")]
    UnderResolved(String),

    #[error("at q = {q}: {source}")]
    AtExponent {
        q: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips `AtExponent` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtExponent { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
