use thiserror::Error;

use crate::netmodel::NodeId;

/// Errors produced by model construction, scheduling and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The communication graph splits into more than one component.
    /// Each inner vector lists the node ids of one component.
    #[error("communication graph is disconnected: {} components ({})", .0.len(), describe_components(.0))]
    Disconnected(Vec<Vec<NodeId>>),

    #[error("invalid interference model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("degenerate placement: {0}")]
    Degenerate(String),

    #[error("instance too large for exhaustive oracle: {size} items (limit {limit})")]
    OracleTooLarge { size: usize, limit: usize },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn describe_components(parts: &[Vec<NodeId>]) -> String {
    parts
        .iter()
        .map(|c| {
            let head: Vec<String> = c.iter().take(4).map(|n| n.to_string()).collect();
            if c.len() > 4 {
                format!("{{{}, ... {} nodes}}", head.join(", "), c.len())
            } else {
                format!("{{{}}}", head.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join(" | ")
}
