use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: shape {shape:?} needs {expected} elements, got {actual}")]
    InvalidTensor {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient entry in parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("row {row} of the one-hot target is not one-hot")]
    NotOneHot { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a checkpoint (bad magic {0:?})")]
    NotACheckpoint([u8; 4]),

    #[error("not a basis file (bad magic {0:?})")]
    NotABasis([u8; 4]),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("payload length mismatch: header declares {expected} values, payload holds {actual}")]
    PayloadLengthMismatch { expected: usize, actual: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("wrong magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label}: only {achieved} of {wanted} latent vectors qualified after exhausting the data")]
    InsufficientSet {
        label: usize,
        achieved: usize,
        wanted: usize,
    },

    #[error("label {label}: acceptance rate fell below 1e-4 ({accepted} accepted in the last {window} draws)")]
    DegenerateGenerator {
        label: usize,
        accepted: usize,
        window: usize,
    },

    #[error("rank deficient input at (label {label}, set {set}): residual {residual:e} vs norm {norm:e}")]
    RankDeficient {
        label: usize,
        set: usize,
        residual: f64,
        norm: f64,
    },

    #[error("basis fails its orthogonality check (defect {defect:e} > {tolerance:e})")]
    StaleBasis { defect: f64, tolerance: f64 },

    #[error("cannot renormalize the zero vector")]
    ZeroVector,

    #[error("latent annihilated at trajectory step {step}")]
    Annihilated { step: usize },

    #[error("missing {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("output directory {0} is locked by another invocation")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
