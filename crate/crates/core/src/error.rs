//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong inside the training core.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Two arrays met an operation with incompatible dimensions.
    #[error("shape mismatch at node {node}: {detail}")]
    ShapeMismatch { node: usize, detail: String },

    /// A forward pass produced NaN or infinity.
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: String },

    /// Backward was requested before the graph had run forward.
    #[error("backward called before forward")]
    BackwardBeforeForward,

    /// An operation that needs at least one sample got none.
    #[error("empty batch passed to {op}")]
    EmptyBatch { op: &'static str },

    /// A class label fell outside `[0, num_classes)`.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },

    /// A λ vector violated its sum or box constraints.
    #[error("infeasible lambda: {detail}")]
    InfeasibleLambda { detail: String },

    /// The λ projection was asked for a target no box-bounded vector reaches.
    #[error("projection infeasible: target sum {target} outside ±{bound}·{n}")]
    InfeasibleProjection { target: f64, bound: f64, n: usize },

    /// A network or schedule was configured with impossible dimensions.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Training code tried to read labels that are reserved for evaluation.
    #[error("target labels consulted during training (leakage guard)")]
    LabelLeakage,

    /// Evaluation needs labels the dataset does not carry.
    #[error("dataset has no labels to evaluate against")]
    Unlabeled,

    /// The H-divergence probe needs at least two samples per domain.
    #[error("domain too small for a train/eval split: {n} sample(s)")]
    DomainTooSmall { n: usize },

    /// A dataset file failed to parse.
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    /// Two paired views disagree on ids, domains, or labels.
    #[error("paired views misaligned: {0}")]
    ViewMismatch(String),

    /// A checkpoint could not be read back.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Plain I/O failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
