//! Error type shared across the library.

use crate::geometry::Point;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PauliError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("field is not reduced: atom coefficient {coeff} at ({x}, {y}) has |C| >= 1")]
    NotReduced { coeff: f64, x: f64, y: f64 },

    #[error("epsilon {eps} out of range (0, {max})")]
    EpsilonRange { eps: f64, max: f64 },

    #[error("evaluation point ({}, {}) coincides with an atom", .0.x, .0.y)]
    SingularPoint(Point),

    #[error("dyadic refinement exceeded depth {depth}: an atom coefficient is too close to 1 for epsilon = {eps}")]
    DepthExceeded { depth: u32, eps: f64 },

    #[error("grid node ({}, {}) collides with an atom", .0.x, .0.y)]
    NodeOnAtom(Point),

    #[error("nonpositive weight cell at index {0}")]
    NonpositiveWeight(usize),

    #[error("weight grid does not align with dyadic squares of scale {scale}: {why}")]
    GridAlignment { scale: i32, why: String },

    #[error("scale too coarse: |mu|(tripled square) = {mass} >= 2*pi*(1-eps) = {limit}")]
    ScaleTooCoarse { mass: f64, limit: f64 },

    #[error("eigensolver did not converge: {0}")]
    SolverDiverged(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PauliError>;
