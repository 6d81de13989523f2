use std::path::PathBuf;

use crate::unit::UnitId;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants mirror the failure modes of the
/// individual pipeline stages so callers can match on what went wrong.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    // Tensor file format.
    #[error("unrecognized format: bad magic bytes in {path}")]
    UnrecognizedFormat { path: PathBuf },
    #[error("invalid tensor header in {path}: {reason}")]
    InvalidHeader { path: PathBuf, reason: String },
    #[error("payload length mismatch in {path}: header says {expected} bytes, found {actual}")]
    PayloadLengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("value at row {row}, col {col} does not fit in f32")]
    F32Overflow { row: usize, col: usize },

    // Manifest / trace validation.
    #[error("missing unit {unit} in split '{split}'")]
    MissingUnit { split: String, unit: UnitId },
    #[error("unexpected unit {unit} in split '{split}'")]
    UnexpectedUnit { split: String, unit: UnitId },
    #[error("inconsistent sample count in split '{split}': {details}")]
    InconsistentSampleCount { split: String, details: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no such split '{0}'")]
    NoSuchSplit(String),
    #[error("invalid unit id: {0}")]
    InvalidUnitId(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    // Spectra.
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("all points are duplicates of one another")]
    AllDuplicates,
    #[error("fewer than {min} usable points after duplicate removal ({got})")]
    TooFewUsablePoints { min: usize, got: usize },

    // Decompose.
    #[error("degenerate row {row}: zero per-sample variance")]
    DegenerateRow { row: usize },
    #[error("missing embed unit among inputs")]
    MissingEmbedUnit,

    // Pursuit.
    #[error("rank-deficient support at step {step}: least-squares refit is singular")]
    RankDeficientSupport { step: usize },
    #[error("atom {index} is not l2-normalized (norm {norm})")]
    AtomNotNormalized { index: usize, norm: f64 },
    #[error("background similarity population has zero standard deviation")]
    ZeroSigma,

    // Similarity.
    #[error("basis row {row} is not l2-normalized (norm {norm})")]
    RowNotNormalized { row: usize, norm: f64 },
    #[error("weights not sorted descending at position {0}")]
    WeightsNotSorted(usize),
    #[error("negative weight at position {0}")]
    NegativeWeight(usize),
    #[error("all matched weights are zero: similarity denominator vanishes")]
    AllWeightsZero,

    // Align / residual training.
    #[error("encoding row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("constant row {row}: zero variance")]
    ConstantRow { row: usize },
    #[error("degenerate task: class encodings span a space of rank < 2")]
    DegenerateTaskSpan,
    #[error("degenerate task: all class encodings identical")]
    DegenerateTask,
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty score list")]
    EmptyScores,
    #[error("cannot select {k} of {n} heads")]
    SelectionTooLarge { k: usize, n: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("lambda length {got} does not match basis components {expected}")]
    LambdaLengthMismatch { expected: usize, got: usize },
    #[error("missing pca basis for unit {0}")]
    MissingBasis(UnitId),

    // Synth / oracles.
    #[error("over-constrained planting: {0}")]
    BadPlanting(String),
    #[error("oracle size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
