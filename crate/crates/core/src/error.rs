use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("charset is empty")]
    CharsetEmpty,
    #[error("invalid charset spec `{spec}`: {reason}")]
    CharsetSpecInvalid { spec: String, reason: String },
    #[error("font not found: {}", .0.display())]
    FontNotFound(PathBuf),
    #[error("font could not be parsed: {0}")]
    FontInvalid(String),
    #[error("glyph missing for U+{0:04X}")]
    GlyphMissing(u32),
    #[error("glyph for U+{0:04X} has no ink")]
    GlyphBlank(u32),
    #[error("bitmap size {0} must be a power of two and at least 8")]
    SizeInvalid(usize),
    #[error("dataset is empty")]
    DatasetEmpty,
    #[error("dataset file is malformed: {0}")]
    DatasetFormat(String),
    #[error("validation fraction {0} must lie in [0, 1)")]
    SplitFraction(f64),
    #[error("split leaves the training set empty")]
    SplitDegenerate,
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error("invalid training config: {0}")]
    TrainConfigInvalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("style vector has length {got}, model expects {expected}")]
    StyleDimMismatch { expected: usize, got: usize },
    #[error("style weights must be finite")]
    StyleWeightsNonFinite,
    #[error("unknown style `{0}`")]
    StyleUnknown(String),
    #[error("invalid mix spec: {0}")]
    MixSpecInvalid(String),
    #[error("numerical divergence at phase {phase} step {step} (loss {loss})")]
    NumericalDivergence {
        phase: u8,
        step: usize,
        loss: f64,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("checkpoint is malformed: {0}")]
    CheckpointFormat(String),
    #[error("catalog is malformed: {0}")]
    CatalogInvalid(String),
    #[error("image encoding failed: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
