use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("edge {index} references unknown node `{node}`")]
    DanglingEdge { index: usize, node: String },

    #[error("edge {index} is a self-loop on `{node}`")]
    SelfLoop { index: usize, node: String },

    #[error("od pair {index} references unknown node `{node}`")]
    UnknownOdNode { index: usize, node: String },

    #[error("unreachable OD pair {index} ({origin} -> {destination})")]
    UnreachableOd {
        index: usize,
        origin: String,
        destination: String,
    },

    #[error("OD pair {index} has more than {cap} simple paths")]
    PathCapExceeded { index: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge cost {index} has no antiderivative; the potential is undefined")]
    MissingAntiderivative { index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("power iteration did not converge: {0}")]
    PowerIteration(String),

    #[error("equilibrium solve exhausted {iterations} iterations with gap {gap:e} > tol {tol:e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        tol: f64,
    },

    #[error("config: {0}")]
    Config(String),
}
