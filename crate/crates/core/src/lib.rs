//! AUROC maximization toolkit.
//!
//! Building blocks for training scorers that rank positives above negatives:
//! exact AUROC computation, six pairwise surrogate losses, four composite
//! losses with their compositional optimizers, a primal-dual min-max solver,
//! a small fully-connected scorer with batch-coupled output normalizations,
//! imbalanced-data utilities, and a benchmark harness with a CLI.

pub mod data;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;

pub use losses::composite::{BatchComponents, CompositeKind, CompositeLossSpec};
pub use losses::pairwise::{PairwiseKind, PairwiseLossSpec};
pub use metrics::{auroc, auroc_bruteforce, ScoredSample};
pub use model::{HeadNorm, Mlp, Mode};
pub use optim::{OptStyle, OptimizerConfig, OptimizerState};

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("need at least one positive and one negative sample")]
    EmptyClass,
    #[error("non-finite score encountered")]
    NonFiniteScore,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("stage average requested before any iterate was recorded")]
    EmptyStage,
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("degenerate batch: raw score norm below 1e-12")]
    DegenerateBatch,
    #[error("forward cache does not match this backward call")]
    CacheMismatch,
    #[error("parse error at row {row}, column {column}")]
    Parse { row: usize, column: String },
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("target positive ratio {target} is not below the current ratio {current}")]
    TargetTooHigh { target: f64, current: f64 },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("too few samples per class for a {k}-fold split")]
    TooFewSamples { k: usize },
    #[error("no results to select from")]
    EmptyResults,
    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
