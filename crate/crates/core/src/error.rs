use thiserror::Error;

use crate::grid::ImageGrid;

pub type Result<T, E = PnpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The iterate became non-finite or its norm exploded.
    #[error("solver diverged at iteration {iteration}: {message}")]
    Divergence {
        iteration: usize,
        message: String,
        last_finite: Box<ImageGrid>,
    },

    #[error("external denoiser failed: {message}{}", format_stderr(.stderr))]
    Adapter { message: String, stderr: String },

    #[error("wire protocol violation: {0}")]
    Protocol(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

fn format_stderr(stderr: &str) -> String {
    if stderr.trim().is_empty() {
        String::new()
    } else {
        format!(" (stderr: {})", stderr.trim())
    }
}

impl PnpError {
    pub(crate) fn shape(expected: (usize, usize), got: (usize, usize)) -> Self {
        PnpError::Dimension {
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, PnpError::Divergence { .. })
    }
}
