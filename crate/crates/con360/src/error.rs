use thiserror::Error;

/// Crate-wide error type. Variants are coarse on purpose: callers branch on
/// the kind, messages carry the detail.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel index ({u}, {v}) out of bounds for {width}x{height} grid")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("aspect ratio must be 2:1, got {width}x{height}")]
    Aspect { width: usize, height: usize },

    #[error("projection domain: {0}")]
    ProjectionDomain(String),

    #[error("full-sphere field of view has no boundary")]
    NoBoundary,

    #[error("mask has no boundary: {0}")]
    UndefinedBoundary(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("value outside expected domain: {0}")]
    Domain(String),

    #[error("bad parameter: {0}")]
    Parameter(String),

    #[error("degenerate centroid: resultant vector norm {norm} below threshold")]
    DegenerateCentroid { norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("npy format error: {0}")]
    NpyFormat(String),

    #[error("unsupported tensor layout: {0}")]
    UnsupportedLayout(String),

    #[error("pgm format error: {0}")]
    PgmFormat(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unknown manifest schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("json parse error at line {line}, column {column}: {message}")]
    JsonParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
