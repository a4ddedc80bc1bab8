//! File formats, run directories and pipelines for the two-hop reasoning
//! laboratory. The numerical work lives in `twohop-core`; this crate turns
//! it into reproducible on-disk experiments.

pub mod analysis;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod sim;
pub mod train;

pub use error::{LabError, Result};
