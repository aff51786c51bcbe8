use std::path::PathBuf;

use thiserror::Error;

/// Violations of the communication-graph invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("adjacency is {rows}x{cols} but pinning has {pins} entries")]
    DimensionMismatch { rows: usize, cols: usize, pins: usize },
    #[error("graph has no nodes")]
    Empty,
    #[error("self-loop on node {node} (a_ii must be 0)")]
    SelfLoop { node: usize },
    #[error("weight a[{i}][{j}] = {value} is negative or not finite")]
    BadWeight { i: usize, j: usize, value: f64 },
    #[error("pinning gain b[{node}] = {value} is negative or not finite")]
    BadPinning { node: usize, value: f64 },
    #[error("no node is pinned to the reference")]
    NoPinnedNode,
    #[error("node {node} is not reachable from any pinned node")]
    Unreachable { node: usize },
    #[error("node {node} has d_i + b_i = 0")]
    ZeroGain { node: usize },
    #[error("node index {node} out of range for a {n}-node graph")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("unknown trade-off mode `{0}`")]
    UnknownMode(String),
}

/// Scenario and configuration problems. `location` names the section/key
/// (and line, when the document parser can report one).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// Numerical failures detected while integrating.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericalError {
    #[error("numerical blowup at t = {time:.6} s: {component} `{name}` became {value}")]
    Blowup {
        time: f64,
        component: String,
        name: String,
        value: f64,
    },
    #[error("initial covariance is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("nominal input gain g0 = {0} must be positive and finite")]
    BadInputGain(f64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerical(#[from] NumericalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
