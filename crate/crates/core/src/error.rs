//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("vector length {got} does not match partition total {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("graph generation gave up after {attempts} attempts: {reason}")]
    GraphGeneration { attempts: usize, reason: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("infeasible point for {geometry}: {reason}")]
    Infeasible { geometry: String, reason: String },

    #[error("proximal step requires a positive stepsize, got {0}")]
    NonpositiveStepsize(f64),

    #[error("non-finite subgradient entry at coordinate {0}")]
    NonFiniteSubgradient(usize),

    #[error("invalid stepsize schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),

    #[error("weight row {agent} sums to {sum}, expected 1")]
    WeightRowSum { agent: usize, sum: f64 },

    #[error("simulation aborted at round {round}: {source}")]
    RoundFailed {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference solver diverged at iteration {iteration} (cost {cost})")]
    SolverDiverged { iteration: usize, cost: f64 },

    #[error("contraction estimation failed: {0}")]
    Estimation(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
