//! Dense linear algebra and path-addressed randomness.
//!
//! Everything here is pure; values are immutable once built and can be shared
//! freely across threads.

mod matrix;
mod rng;
mod svd;

pub use matrix::Matrix;
pub use rng::{sample_standard_normal, sample_uniform, RngStream};
pub use svd::{svd_thin, Svd, MAX_SWEEPS};
