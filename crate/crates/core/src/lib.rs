//! Desk-scale laboratory for debiased learning with selective mixup.
//!
//! The pipeline: a synthetic biased dataset pairs an easy, high-SNR "bias"
//! feature block with a hard, low-SNR "robust" block. An auxiliary encoder
//! trained with a generalized supervised contrastive loss clusters examples
//! by their biased features; its embedding space drives the selection of
//! contradicting pairs, which are mixed to synthesize bias-conflicting
//! training data for the debiased classifier.

pub mod evalmetrics;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod selecmix;
pub mod synthdata;
pub mod trainer;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the public operations that can produce them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row} has near-zero norm {norm:e}")]
    ZeroRow { row: usize, norm: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("q must lie in (0, 1], got {0}")]
    InvalidQ(f64),
    #[error("tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("example {0} has no positive partner in the batch")]
    NoPositives(usize),
    #[error("empty candidate set for query {0}")]
    EmptyCandidateSet(usize),
    #[error("batch of size {0} is too small to mix (need at least 2)")]
    BatchTooSmall(usize),
    #[error("similarity backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("training diverged at iteration {iteration}; partial history attached")]
    Diverged {
        iteration: usize,
        history: Box<trainer::RunHistory>,
    },
    #[error("subset is empty")]
    EmptySubset,
    #[error("no pairs available for category {0}")]
    EmptyCategory(&'static str),
    #[error("pair log is empty")]
    EmptyLog,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
