use crate::basis::BasisKind;

/// Errors raised across the crate.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid order (n={n}, m={m}) for {kind}: {reason}")]
    InvalidOrder {
        kind: BasisKind,
        n: i32,
        m: i32,
        reason: &'static str,
    },

    #[error("point ({x}, {y}) lies outside the disk of radius {w} centered at ({u}, {v})")]
    OutsideDomain { x: f64, y: f64, u: f64, v: f64, w: f64 },

    #[error("size too small: {0}")]
    SizeTooSmall(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("disk centered at ({u}, {v}) with radius {w} is not inside the {width}x{height} image")]
    DiskOutOfBounds {
        u: f64,
        v: f64,
        w: f64,
        width: usize,
        height: usize,
    },

    #[error("spectrum is {got_w}x{got_h}, need at least {need_w}x{need_h}")]
    SpectrumSizeMismatch {
        got_w: usize,
        got_h: usize,
        need_w: usize,
        need_h: usize,
    },

    #[error("moment field has no channel for {0}")]
    MissingChannel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::UnsupportedFormat(_) | Error::CorruptHeader(_) => 2,
            Error::InvalidConfig { .. } => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
