use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{sample_standard_normal, Matrix, RngStream};

/// Random Gaussian map `d_in → d_out` with entries N(0, 1/d_out).
///
/// The scaling keeps squared norms unchanged in expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub stream: RngStream,
    pub matrix: Matrix,
}

impl ProjectionModel {
    pub fn generate(stream: &RngStream, d_in: usize, d_out: usize) -> Result<Self> {
        if d_out == 0 || d_in == 0 {
            return Err(Error::Shape(format!("projection {d_in} -> {d_out}")));
        }
        let scale = 1.0 / (d_out as f64).sqrt();
        Ok(Self {
            stream: stream.clone(),
            matrix: sample_standard_normal(stream, d_in, d_out).scale(scale),
        })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.matrix)
    }
}

/// `x · R` for the projection drawn from `stream`.
pub fn gaussian_project(x: &Matrix, d_out: usize, stream: &RngStream) -> Result<Matrix> {
    ProjectionModel::generate(stream, x.cols(), d_out)?.apply(x)
}
