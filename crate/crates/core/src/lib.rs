//! Desk-scale unsupervised domain adaptation with collaborative and
//! adversarial feature alignment.
//!
//! The crate trains a small multi-block feed-forward network on a labeled
//! source domain and an unlabeled target domain. Every feature block feeds a
//! domain discriminator; a learned weight vector `λ` decides, per block,
//! whether the block is trained to keep domain information (collaborative,
//! `λ_l > 0`) or discard it (adversarial, `λ_l < 0`). On top of that sits a
//! self-paced curriculum that gradually admits pseudo-labeled and
//! domain-confident target samples into training, and an optional two-stream
//! variant that exchanges selections between two views of the same data.
//!
//! Module map:
//!
//! * [`array`], [`graph`], [`optim`], [`rng`] — dense matrices, the reverse-mode
//!   tape, SGD with the inverse-decay schedule, and seeded RNG streams.
//! * [`lambda`], [`network`], [`hdiv`] — the block/discriminator network, its
//!   losses, the constrained `λ` update, and an H-divergence probe.
//! * [`selection`], [`batch`] — self-paced schedules, target selection, and
//!   batch composition.
//! * [`data`] — synthetic domain-shift datasets with label quarantine.
//! * [`trainer`], [`two_stream`] — the end-to-end training loops.

pub mod array;
pub mod batch;
pub mod data;
pub mod error;
pub mod graph;
pub mod hdiv;
pub mod lambda;
pub mod network;
pub mod optim;
pub mod rng;
pub mod selection;
pub mod trainer;
pub mod two_stream;

pub use array::Array2;
pub use data::{Dataset, GeneratorKind, PairedDataset, PairedSpec, Sample, ShiftSpec};
pub use error::CoreError;
pub use graph::{Graph, NodeId};
pub use hdiv::{h_divergence_estimate, ProbeConfig};
pub use lambda::{project_lambda, update_lambda, LambdaMode, LambdaWeights};
pub use network::{Network, NetworkSpec};
pub use optim::{OptimizerConfig, Parameter};
pub use selection::{ConfidenceRecord, ScheduleState, SelectionSets};
pub use trainer::{evaluate, train, Method, MetricsRecord, RunResult, RunSummary, TrainConfig};
pub use two_stream::{fuse_predict, train_two_stream, TwoStreamMetrics, TwoStreamResult};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
