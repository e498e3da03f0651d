//! Error type shared by all pipeline stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SemvoxError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("chunk dims {requested:?} exceed grid dims {available:?}")]
    ChunkTooLarge {
        requested: [usize; 3],
        available: [usize; 3],
    },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("frame image is {actual:?} but intrinsics declare {expected:?}")]
    IntrinsicsMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("render of {pixels} pixels exceeds the ray cap of {cap}")]
    RayCapExceeded { pixels: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tape does not match the given parameters/config: {0}")]
    TapeMismatch(String),

    #[error("no valid voxels in the target chunk")]
    NoValidVoxels,

    #[error("grids do not align: {0}")]
    GridMismatch(String),

    #[error("scene produced no usable training samples: {0}")]
    EmptyScene(String),

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SemvoxError {
    /// Process exit code category: I/O failures exit 3, everything else
    /// (domain errors) exits 4. Usage errors are handled by the CLI parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            SemvoxError::Io(_) => 3,
            _ => 4,
        }
    }
}
