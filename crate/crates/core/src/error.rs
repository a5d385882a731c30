//! Crate-wide error type. Every fallible operation returns [`Result`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at channel {channel}, index {index}")]
    NonFinite { channel: usize, index: usize },

    #[error("length mismatch: expected {expected}, got {got} ({context})")]
    LengthMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("sampling rate must be finite and positive, got {0}")]
    NonPositiveRate(f64),

    #[error("cutoff {cutoff} Hz out of range for fs {fs} Hz")]
    CutoffOutOfRange { cutoff: f64, fs: f64 },

    #[error("unsupported filter order {0}")]
    UnsupportedOrder(usize),

    #[error("sampling rate mismatch: filter designed for {designed} Hz, signal is {got} Hz")]
    RateMismatch { designed: f64, got: f64 },

    #[error("bad smoothing window: {0}")]
    BadWindow(String),

    #[error("bad resampling ratio {up}/{down}")]
    BadRatio { up: usize, down: usize },

    #[error("signal too short: {got} samples, need at least {min}")]
    TooShort { got: usize, min: usize },

    #[error("bad decomposition depth {levels} for {len} samples")]
    BadLevels { levels: usize, len: usize },

    #[error("level {level} not present in decomposition of depth {depth}")]
    BadLevel { level: usize, depth: usize },

    #[error("zero variance in channel {channel}, epoch {epoch}")]
    ZeroVariance { channel: String, epoch: usize },

    #[error("extinction matrix is numerically singular (|det| = {0:.3e})")]
    SingularExtinction(f64),

    #[error("epoch window for event {event_index} (sample {sample}) exceeds recording bounds")]
    WindowOutOfBounds { event_index: usize, sample: usize },

    #[error("channel {channel} required by region {region} is missing")]
    MissingChannel { region: String, channel: String },

    #[error("epoch count mismatch across modalities: {0:?}")]
    EpochCountMismatch(Vec<usize>),

    #[error("invalid region map: {0}")]
    BadRegionMap(String),

    #[error("insufficient data: {rows} regression rows for {params} parameters")]
    InsufficientData { rows: usize, params: usize },

    #[error("noise covariance has non-positive diagonal entry {0}")]
    ZeroNoiseVariance(usize),

    #[error("coefficient matrix singular at {freq} Hz")]
    SingularAbar { freq: f64 },

    #[error("spectral matrix singular at {freq} Hz")]
    SingularSpectrum { freq: f64 },

    #[error("metric mismatch: {0} vs {1}")]
    MetricMismatch(String, String),

    #[error("all paired differences are zero")]
    AllZeroDifferences,

    #[error("frequency band ({0}, {1}) Hz selects no spectral support")]
    BadBand(f64, f64),

    #[error("too few spectral averages: {got}, need at least {min}")]
    TooFewSegments { got: usize, min: usize },

    #[error("unstable process specification: spectral radius {0:.6}")]
    UnstableSpec(f64),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("results tree incomplete: {0}")]
    IncompleteResults(String),

    #[error("duplicate channel name {0}")]
    DuplicateChannel(String),

    #[error("subject {subject}, condition {condition}: {source}")]
    SubjectContext {
        subject: String,
        condition: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            msg: msg.into(),
        }
    }
}
