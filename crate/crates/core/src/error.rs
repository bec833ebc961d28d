use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tile is empty")]
    EmptyTile,

    #[error("tile size {size} exceeds slide dimensions {width}x{height}")]
    TileLargerThanSlide { size: u32, width: u32, height: u32 },

    #[error("unsupported tile size {0} (expected 224 or 392)")]
    UnsupportedTileSize(u32),

    #[error("invalid {what} range ({lo}, {hi})")]
    InvalidRange { what: &'static str, lo: f64, hi: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "no crop of area fraction {scale_lo} with aspect in ({aspect_lo}, {aspect_hi}) fits a {width}x{height} source"
    )]
    InfeasibleCrop {
        scale_lo: f64,
        aspect_lo: f64,
        aspect_hi: f64,
        width: u32,
        height: u32,
    },

    #[error("extended-context translation needs source size > output size (got {source_size} <= {output_size})")]
    SourceNotLarger { source_size: u32, output_size: u32 },

    #[error("crop ({x}, {y}, {w}, {h}) does not fit inside a {width}x{height} image")]
    CropOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("candidate list is empty")]
    NoCandidates,

    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("vector is not unit-norm (norm {0})")]
    NotUnitNorm(f64),

    #[error("batch is not normalized to the unit sphere")]
    NotNormalized,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("duplicate magnification {0} mpp")]
    DuplicateMagnification(f64),

    #[error("magnification {0} mpp is not registered in the table")]
    UnknownMagnification(f64),

    #[error("training set has a single class")]
    SingleClass,

    #[error("loss became NaN at iteration {0}")]
    NanLoss(usize),

    #[error("iteration {t} outside schedule [0, {iterations}]")]
    IterationOutOfRange { t: usize, iterations: usize },

    #[error("test set is empty")]
    EmptyTestSet,
}
