use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An IMU sample arrived with a timestamp not after the previous one.
    StreamOrder { previous: f64, got: f64 },
    /// A sample or parameter contained NaN or infinity.
    NonFinite(&'static str),
    /// Input is empty where at least one element is required.
    Empty(&'static str),
    /// A configuration or argument value is out of its valid range.
    InvalidArgument(String),
    /// Tensor or image dimensions do not match what the operation expects.
    Shape(String),
    /// A class index does not exist in the active taxonomy.
    LabelOutOfRange { what: &'static str, index: usize, len: usize },
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, step: usize, loss: f64 },
    /// The prediction could not be made consistent with the mapping table.
    RecognitionFailed {
        p_object: alloc::vec::Vec<f64>,
        p_material: alloc::vec::Vec<f64>,
        best_joint: f64,
    },
    /// Malformed serialized data (checkpoints, manifests).
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::StreamOrder { previous, got } => {
                write!(f, "stream order violated: t={got} does not follow t={previous}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::LabelOutOfRange { what, index, len } => {
                write!(f, "{what} index {index} out of range (0..{len})")
            }
            Error::Diverged { epoch, step, loss } => {
                write!(f, "training diverged at epoch {epoch}, step {step} (loss = {loss})")
            }
            Error::RecognitionFailed { best_joint, .. } => write!(
                f,
                "recognition failed: best consistent joint probability {best_joint:.4} below floor"
            ),
            Error::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
