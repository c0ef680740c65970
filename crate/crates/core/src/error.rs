use thiserror::Error;

use crate::topology::Axis;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("non-finite level-set value at ({0}, {1}, {2})")]
    NonFiniteEvaluation(f64, f64, f64),
    #[error("level set does not provide {0}")]
    CapabilityMissing(&'static str),
    #[error("Bernstein interpolation failed: {0}")]
    InterpolationFailure(String),
    #[error("axis {0:?} is not active in the body")]
    AxisInactive(Axis),
    #[error("nested body structure violated: {0}")]
    StructuralInvariantViolation(String),
    #[error("no usable height direction: gradient vanishes on all body centers")]
    DirectionUndetermined,
    #[error("no sign change in bracket [{lo}, {hi}] (values {flo}, {fhi})")]
    BracketInvalid { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("Newton iteration did not converge near {0:?}")]
    NewtonDiverged([f64; 3]),
    #[error("nested body is not fully tessellated")]
    NotTessellated,
    #[error("height derivative is singular (|d_h alpha| = {0:e})")]
    DerivativeSingular(f64),
    #[error("Gauss-Legendre order {0} unsupported (1..=32)")]
    OrderUnsupported(usize),
    #[error("integrand is not finite at node {index} (cell {cell}, tile {tile})")]
    NonFiniteIntegrand {
        index: usize,
        cell: usize,
        tile: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cell {cell}: {source}")]
    Cell { cell: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
