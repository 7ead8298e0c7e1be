//! Error type shared across the crate.

use std::path::PathBuf;

/// Everything that can go wrong while loading, mutating or evaluating a
/// target. Execution failures of the *variant* (compile errors, timeouts,
/// bad output) are deliberately not errors: they are fitness statuses and
/// live in [`crate::fitness::VariantStatus`].
#[derive(Debug, thiserror::Error)]
pub enum MagpieError {
    #[error("patch parse error at line {line}: {msg}")]
    PatchParse { line: usize, msg: String },

    #[error("xml error in {file}: {msg}")]
    Xml { file: String, msg: String },

    #[error("parameter space error: {0}")]
    Space(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("scenario config error: key '{key}': {reason}")]
    Config { key: String, reason: String },

    #[error("unknown location: {0}")]
    UnknownLocation(String),

    #[error("unknown parameter: {0}")]
    UnknownParameter(String),

    #[error("value '{value}' outside the domain of parameter '{param}'")]
    OutOfDomain { param: String, value: String },

    #[error("empty edit space for kind {0}")]
    EmptySpace(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("workspace error: {0}")]
    Workspace(String),

    #[error("baseline evaluation is not CLEAN (got {0})")]
    BaselineFailure(String),

    #[error("fold error: {0}")]
    Fold(String),

    #[error("objective arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),

    #[error("coefficient of variation undefined for zero mean (objective {0})")]
    ZeroMean(usize),

    #[error("zero baseline objective at index {0}")]
    ZeroBaseline(usize),

    #[error("stability needs at least two samples, got {0}")]
    TooFewSamples(usize),

    #[error("edit space too large for exhaustive enumeration: {candidates} candidates exceed cap {cap}")]
    SpaceTooLarge { candidates: u128, cap: u128 },

    #[error("cannot minimize an empty patch")]
    EmptyPatch,

    #[error("combining needs at least two patches, got {0}")]
    NotEnoughPatches(usize),

    #[error("fitness report is not CLEAN")]
    NotClean,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid regex: {0}")]
    Regex(#[from] regex::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MagpieError>;
