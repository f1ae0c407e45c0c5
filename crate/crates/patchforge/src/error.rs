use thiserror::Error;

/// Shape or graph misuse detected while building tensor expressions.
#[derive(Error, Debug)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensors belong to different gradient graphs")]
    GraphMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Failures raised by `grad`.
#[derive(Error, Debug)]
pub enum GradError {
    #[error("objective must be a scalar, got shape {0:?}")]
    NonScalarObjective(Vec<usize>),
    #[error("tensor {0} is not linked to the gradient graph of the objective")]
    NotInGraph(usize),
    #[error("tensor {0} is not reachable from the objective")]
    NotReachable(usize),
    #[error("no differentiable path from the objective to tensor {0}")]
    NoPath(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Training-time failures (optimizers and step loops).
#[derive(Error, Debug)]
pub enum TrainError {
    #[error("non-finite gradient in parameter '{0}', step aborted")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {step}: d_loss={d_loss}, g_loss={g_loss}")]
    NonFiniteLoss { step: u64, d_loss: f64, g_loss: f64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteClassifierLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Dataset ingestion and split failures.
#[derive(Error, Debug)]
pub enum DataError {
    #[error("dataset root {0} does not exist")]
    MissingRoot(String),
    #[error("class directory '{0}' has no usable images")]
    EmptyClass(String),
    #[error("unreadable file {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("image {path} has {channels} channels, expected 3 (8-bit RGB)")]
    WrongChannelCount { path: String, channels: usize },
    #[error("insufficient data: class {label} has {have} images, {need} required (pass the proportional-scaling flag for smaller corpora)")]
    InsufficientData { label: u8, have: usize, need: usize },
    #[error("empty pool")]
    EmptyPool,
    #[error("invalid fraction {0}, must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("invalid split manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Checkpoint manifest or payload problems.
#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("manifest field '{field}' mismatch: checkpoint has {found}, expected {expected}")]
    SpecMismatch {
        field: String,
        found: String,
        expected: String,
    },
    #[error("missing manifest field '{0}'")]
    MissingField(String),
    #[error("malformed manifest line: {0}")]
    MalformedManifest(String),
    #[error("array '{name}' has {found} bytes, expected {expected}")]
    CorruptedArray {
        name: String,
        found: usize,
        expected: usize,
    },
    #[error("missing array file for parameter '{0}'")]
    MissingArray(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metric computation failures.
#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("empty test set")]
    EmptyTestSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Serialize(String),
}
