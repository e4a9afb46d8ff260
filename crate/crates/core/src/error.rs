use thiserror::Error;

use crate::linalg::LinearSolveReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("refinement level {level} exceeds the supported maximum {max}")]
    Capacity { level: u32, max: u32 },

    #[error("coefficient is not positive definite in cell {cell} (det = {det:e}, trace = {trace:e})")]
    Coefficient { cell: usize, det: f64, trace: f64 },

    #[error("control is not admissible at node {node} (margin {margin:e})")]
    InfeasibleControl { node: usize, margin: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("linear solver did not converge: {report:?}")]
    LinearSolve { report: LinearSolveReport },

    #[error("active-set iteration did not settle after {iterations} iterations ({} vs {} active nodes)", last.len(), previous.len())]
    ActiveSetCycling {
        iterations: usize,
        last: Vec<usize>,
        previous: Vec<usize>,
    },

    #[error("Newton iteration failed after {} steps, last residual {:e}", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NewtonDivergence { history: Vec<f64> },

    #[error("line search stagnated at iteration {iteration} (gradient norm {grad_norm:e})")]
    Stagnation { iteration: usize, grad_norm: f64 },

    #[error("no feasible active-set configuration found by enumeration")]
    OracleFailure,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}
