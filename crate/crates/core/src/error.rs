use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    // imaging
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("stride {stride} does not divide {len}")]
    BadStride { stride: usize, len: usize },
    #[error("blur extent {extent} out of range 1..={max}")]
    BadExtent { extent: usize, max: usize },
    #[error("brightness factor {0} outside [-1, 1]")]
    BadFactor(f64),

    // transforms
    #[error("expected length {expected}, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("spectrum is identically zero")]
    ZeroSpectrum,
    #[error("haar step needs an even, nonzero length (got {0})")]
    OddLength(usize),
    #[error("pyramid depth {levels} outside 1..={max}")]
    BadLevels { levels: usize, max: usize },
    #[error("signal is identically zero")]
    ZeroSignal,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("need at least two histograms, got {0}")]
    TooFewHistograms(usize),

    // mlp
    #[error("bad topology: {0}")]
    BadTopology(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    // decision
    #[error("no outputs to decide on")]
    EmptyOutputs,
    #[error("length mismatch: {outputs} outputs vs {names} class names")]
    LengthMismatch { outputs: usize, names: usize },
    #[error("no results to score")]
    EmptyResults,

    // datagen
    #[error("bad class spec: {0}")]
    BadSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
