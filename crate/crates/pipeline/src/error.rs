use garment_core::CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<PipelineError>,
    },

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pose encoder needs rank {needed}, corpus rank is {got}")]
    InsufficientRank { needed: usize, got: usize },

    #[error("offsets for frame {frame} exceed the 0.5 m sanity cap (|d| = {magnitude:.3})")]
    OffsetsOutOfRange { frame: usize, magnitude: f64 },

    #[error("body mesh is not watertight: {0}")]
    NotWatertight(String),

    #[error("script produced displacements outside [{min}, {max}] at frame {frame}")]
    ScriptOutOfBounds { frame: usize, min: f64, max: f64 },

    #[error("evaluation region is empty")]
    EmptyRegion,

    #[error("ground-truth mask is empty after thresholding")]
    EmptyGroundTruth,

    #[error("{0}")]
    InvalidInput(String),
}

impl PipelineError {
    pub fn at_frame(frame: usize, source: PipelineError) -> Self {
        PipelineError::Frame { frame, source: Box::new(source) }
    }
}
