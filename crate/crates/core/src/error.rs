use crate::image::Shape;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("image buffer has {found} samples, shape {shape} needs {expected}")]
    BufferLength {
        shape: Shape,
        expected: usize,
        found: usize,
    },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("no observed samples to initialise from")]
    EmptyObservedSet,

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("step {step} (tau = {tau}): {source}")]
    Step {
        step: usize,
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_step(self, step: usize, tau: f64) -> Self {
        Error::Step {
            step,
            tau,
            source: Box::new(self),
        }
    }
}
