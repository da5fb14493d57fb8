use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("face {face} is degenerate: indices ({a}, {b}, {c})")]
    DegenerateFace { face: usize, a: usize, b: usize, c: usize },

    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("vertex {vertex} has no incident faces")]
    IsolatedVertex { vertex: usize },

    #[error("topology mismatch: {context}")]
    TopologyMismatch { context: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("pose entry {index} is not finite")]
    NonFinitePose { index: usize },

    #[error("rig is invalid: {0}")]
    InvalidRig(String),

    #[error("vertex {vertex}: blended skinning transform is near-singular (condition {condition:.3e})")]
    SingularSkinningTransform { vertex: usize, condition: f64 },

    #[error("camera is invalid: {0}")]
    InvalidCamera(String),

    #[error("mesh is entirely behind the camera")]
    MeshBehindCamera,

    #[error("stale pixel assignment: mesh topology changed since the forward pass")]
    StaleAssignment,

    #[error("image too small: need at least {min}x{min}, got {width}x{height}")]
    ImageTooSmall { min: usize, width: usize, height: usize },

    #[error("image dimensions disagree: {0}")]
    ImageDimensionMismatch(String),

    #[error("subspace fit needs at least {needed} meshes, got {got}")]
    CorpusTooSmall { needed: usize, got: usize },

    #[error("invalid data in {path}: {message}")]
    InvalidData { path: PathBuf, message: String },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CoreError::Parse { path: path.into(), line, message: message.into() }
    }
}
