//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the geometry pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a mathematical precondition (non-positive depth,
    /// out-of-range code, non-unit vector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Grids or stacks with mismatched resolution / length.
    #[error("shape error: {0}")]
    Shape(String),

    /// Malformed grid file. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { msg: String, offset: u64 },

    /// The optimization system has no anchoring observations.
    #[error("under-constrained system: {0}")]
    UnderConstrained(String),

    /// Non-finite values encountered inside an iterative solver.
    #[error("numeric error at iteration {iteration}: {msg}")]
    Numeric { msg: String, iteration: usize },

    /// Nothing to operate on (empty mask, empty cloud, ...).
    #[error("empty input: {0}")]
    Empty(String),

    /// Scene generation could not satisfy placement constraints.
    #[error("generation failed for scene {scene_index}: {msg}")]
    Generation { msg: String, scene_index: usize },

    /// A pipeline stage failed; the stage name is preserved for reporting.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
