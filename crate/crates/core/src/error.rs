use thiserror::Error;

/// Errors raised while constructing or validating network models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("edge {index}: self-loop at node {node}")]
    SelfLoop { index: usize, node: usize },
    #[error("edge {index}: endpoint {node} is not a node (graph has {node_count} nodes)")]
    UnknownNode {
        index: usize,
        node: usize,
        node_count: usize,
    },
    #[error("edge {index}: capacity must be positive, got {capacity}")]
    BadCapacity { index: usize, capacity: f64 },
    #[error("edge {index}: cost must be non-negative, got {cost}")]
    BadCost { index: usize, cost: f64 },
    #[error("commodity {commodity}: {reason}")]
    BadCommodity { commodity: usize, reason: String },
    #[error("invalid unit system: {0}")]
    BadUnits(String),
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
}

/// Violations of the physical queueing contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("negative flow {amount} on commodity {commodity}, edge {edge}, lifetime {lifetime}")]
    NegativeFlow {
        commodity: usize,
        edge: usize,
        lifetime: usize,
        amount: f64,
    },
    #[error("availability violated at {} place(s); first: {first}", .count)]
    Availability { count: usize, first: String },
    #[error("invariant breach: {0}")]
    Invariant(String),
    #[error("empty or out-of-range window {start}..{end} over {len} slots")]
    BadWindow {
        start: usize,
        end: usize,
        len: usize,
    },
}

/// Failures of the linear-programming layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

/// Simulation failures.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invariant breach at slot {slot}: {source}\n{dump}")]
    Invariant {
        slot: usize,
        #[source]
        source: QueueError,
        dump: String,
    },
}
