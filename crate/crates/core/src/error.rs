use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left} and {right}")]
    DimensionMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("empty dimension: {0}")]
    Empty(&'static str),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("matrix size overflow: {rows} x {cols}")]
    Overflow { rows: usize, cols: usize },

    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("basis is not orthonormal at tolerance {tol:e} (max deviation {deviation:e})")]
    NotOrthonormal { tol: f64, deviation: f64 },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem too large for exhaustive search: {cols} columns (limit {limit}); use basis pursuit")]
    TooLarge { cols: usize, limit: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
