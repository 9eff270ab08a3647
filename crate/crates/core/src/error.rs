use std::path::PathBuf;

use crate::raster::BoxR;
use crate::tensor::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("box {box_:?} does not fit a {height}x{width} raster")]
    BoxOutOfBounds { box_: BoxR, height: usize, width: usize },

    #[error("invalid box ({0}, {1}, {2}, {3}): need r_a < r_c and r_b < r_d")]
    DegenerateBox(usize, usize, usize, usize),

    #[error("box dimensions differ: {0:?} vs {1:?}")]
    BoxDimensionMismatch(BoxR, BoxR),

    #[error("class count mismatch: expected {expected}, got {actual}")]
    ClassCount { expected: usize, actual: usize },

    #[error("class id {class} exceeds class count {num_classes}{}", context_suffix(.context))]
    ClassOutOfRange {
        class: u32,
        num_classes: usize,
        context: Option<String>,
    },

    #[error("value {value} outside [0, 1] at flat index {index}")]
    ValueOutOfRange { value: f32, index: usize },

    #[error("invalid box size range {a_min}-{a_max}: need 0 < a_min <= a_max <= 1")]
    InvalidRange { a_min: f64, a_max: f64 },

    #[error("no integer box on a {height}x{width} raster has a normalized area in [{a_min}, {a_max}]")]
    InfeasibleRange {
        a_min: f64,
        a_max: f64,
        height: usize,
        width: usize,
    },

    #[error(
        "box generation gave up after {attempts} draws with {accepted}/{requested} boxes accepted \
         (range {a_min}-{a_max}, {height}x{width})"
    )]
    ResampleCapExceeded {
        attempts: u64,
        accepted: usize,
        requested: usize,
        a_min: f64,
        a_max: f64,
        height: usize,
        width: usize,
    },

    #[error("policy {policy} requires {what} on sample {id:?}")]
    MissingAuxiliary {
        policy: &'static str,
        what: &'static str,
        id: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid noise input: {0}")]
    Noise(String),

    #[error("no samples in dataset")]
    NoSamples,

    #[error("batch {batch} holds a single sample, so no CutMix partner exists (p = {p})")]
    NoPartner { batch: usize, p: f64 },

    #[error("{}:{line}: {message}", .file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sample {id:?}: {message}")]
    Sample { id: String, message: String },

    #[error("{}: {source}", .path.display())]
    Tensor {
        path: PathBuf,
        #[source]
        source: TensorError,
    },

    #[error("{}: png: {message}", .path.display())]
    Png { path: PathBuf, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
