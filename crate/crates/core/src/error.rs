use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },

    #[error("node index {node} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },

    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },

    #[error("edge ({u}, {v}) has invalid weight {weight}")]
    InvalidWeight { u: usize, v: usize, weight: f64 },

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("{kind} label vector has length {got}, expected {expected}")]
    LabelLength {
        kind: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("graph carries no {0} labels")]
    MissingLabels(&'static str),

    #[error("no label given for node {node}")]
    MissingNodeLabel { node: usize },

    #[error("rank {value} of node {node} lies outside [0, 1]")]
    RankOutOfRange { node: usize, value: f64 },

    #[error("unknown cell `{0}`")]
    UnknownCell(String),

    #[error("group A is empty{}", .cell.as_ref().map(|c| format!(" in cell `{c}`")).unwrap_or_default())]
    EmptyGroup { cell: Option<String> },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("Hájek denominator S0 = {s0} is not positive")]
    NonPositiveDenominator { s0: f64 },

    #[error("regression design is degenerate: regressor has zero variance")]
    DegenerateDesign,

    #[error("noise variance {sigma2} swamps the regressor sample variance {sample_var}")]
    DegenerateAttenuation { sample_var: f64, sigma2: f64 },

    #[error("value {value} at row {index} lies outside the declared bounds [{lo}, {hi}]")]
    OutOfBounds { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },

    #[error("{what} supports at most {max} nodes, graph has {got}")]
    TooLarge { what: &'static str, max: usize, got: usize },

    #[error("edge probability {probability} exceeds 1; lower d_bar or h")]
    ProbabilityTooLarge { probability: f64 },

    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("experiment config: {0}")]
    Config(String),

    #[error("cannot access {}", .path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }
}
