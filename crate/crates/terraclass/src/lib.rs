//! Point cloud I/O, synthetic scenes, file formats and the end-to-end
//! training and evaluation pipeline built on `terraclass-core`.

pub mod cloudio;
pub mod error;
pub mod featfile;
pub mod modelfile;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use terraclass_core as core;
