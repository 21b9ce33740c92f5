use std::path::PathBuf;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("non-finite {what} at agent {agent}, state {state}, action {action}")]
    NonFinite {
        what: &'static str,
        agent: usize,
        state: usize,
        action: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("policy is not a distribution at agent {agent}, state {state}: {reason}")]
    NotADistribution {
        agent: usize,
        state: usize,
        reason: String,
    },

    #[error("policy not strictly interior: agent {agent}, state {state}, action {action} has zero probability")]
    NotInterior {
        agent: usize,
        state: usize,
        action: usize,
    },

    #[error("environment `{0}` has no stage potential")]
    MissingPotential(String),

    #[error("mismatch coefficient upper bound unavailable ({0}); supply M manually")]
    MismatchUnavailable(String),

    #[error("step size {eta:e} is not below the convergence bound {bound:e}")]
    StepSizeGuard { eta: f64, bound: f64 },

    #[error("state budget exceeded: {needed} states needed, budget is {budget}")]
    StateBudget { needed: u128, budget: u64 },

    #[error("cost of edge {edge} is {value} at load {load}, outside [0, 1]")]
    CostOutOfRange { edge: usize, load: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("hypothesis violated at agent {agent}, state {state}, action {action}: |displacement| = {displacement:e} > {limit:e}")]
    Hypothesis {
        agent: usize,
        state: usize,
        action: usize,
        displacement: f64,
        limit: f64,
    },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("environment file: {0}")]
    Format(String),
}
