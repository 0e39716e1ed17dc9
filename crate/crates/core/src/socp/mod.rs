//! Second-order cone programs: a small modelling layer and an interior-point
//! backend.

mod program;
mod solver;

pub use program::{ConeProgram, Constraint, FeasibilityReport, LinExpr, SecondOrderCone, VarId};
pub use solver::{solve, Residuals, SolveStatus, Solution, SolverSettings};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SocpError {
    #[error("expression references undeclared variable x{0}")]
    UndeclaredVariable(usize),
    #[error("assignment has {got} values, program has {expected} variables")]
    Assignment { expected: usize, got: usize },
    #[error("invalid solver settings: {0}")]
    Settings(String),
    #[error("backend rejected the program: {0}")]
    Backend(String),
}
