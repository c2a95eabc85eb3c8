//! Dense local orthogonal-moment representations of grayscale images.

pub mod basis;
pub mod cli;
pub mod detect;
pub mod error;
pub mod fft;
pub mod forensics;
pub mod formats;
pub mod invariants;
pub mod kernelgen;
pub mod matching;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
