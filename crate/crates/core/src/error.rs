use std::path::PathBuf;

/// Errors produced by the focaldepth library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument `{name}`: {reason}")]
    Argument { name: &'static str, reason: String },

    #[error("state error: {0}")]
    State(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("no valid pixels to evaluate")]
    EmptyEvaluation,

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unsupported bit depth in {}: expected {expected}, found {found}", path.display())]
    UnsupportedBitDepth {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("size mismatch between rgb ({rgb_w}x{rgb_h}) and depth ({depth_w}x{depth_h}) for {source_id}")]
    SizeMismatch {
        source_id: String,
        rgb_w: u32,
        rgb_h: u32,
        depth_w: u32,
        depth_h: u32,
    },

    #[error("manifest {}:{line}: {reason}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate source_id `{0}` in manifest")]
    DuplicateSourceId(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-finite loss at step {step} (sample `{sample_id}`)")]
    NonFiniteLoss { step: usize, sample_id: String },
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Argument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
