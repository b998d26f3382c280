use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("label {label} at voxel {index} is not below num_classes {num_classes}")]
    InvalidLabel {
        label: u32,
        index: usize,
        num_classes: usize,
    },

    #[error("non-finite input value at flat index {index}")]
    NonFiniteInput { index: usize },

    #[error("value {value} at flat index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("distance transform needs at least one source voxel")]
    EmptySources,

    #[error("degenerate ground truth: {0}")]
    DegenerateGroundTruth(String),

    #[error("alpha {0} is outside [0, 1]")]
    InvalidAlpha(f64),

    #[error("class {class} has zero voxels in the dataset")]
    EmptyClassInDataset { class: usize },

    #[error("epoch {epoch} is outside [0, {total}]")]
    InvalidEpoch { epoch: usize, total: usize },

    #[error("surface distance needs two non-empty point sets")]
    EmptySurface,

    #[error("non-finite gradient{}", match .epoch { Some(e) => format!(" at epoch {e}"), None => String::new() })]
    NonFiniteGradient { epoch: Option<usize> },

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
