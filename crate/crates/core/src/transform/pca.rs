use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{svd_thin, Matrix};

/// Principal-component projection fitted on one company's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Matrix,
    /// Nonincreasing, `s² / (rows − 1)`.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Top-`k` right singular directions of the centered input.
    ///
    /// Each component is flipped so that its largest-magnitude entry is
    /// positive (first such entry on exact ties).
    pub fn fit(x: &Matrix, k: usize) -> Result<Self> {
        let max = x.cols().min(x.rows().saturating_sub(1));
        if k == 0 || k > max {
            return Err(Error::Rank { k, max });
        }
        let mean = x.column_means();
        let centered = x.add_row_broadcast(&mean.iter().map(|m| -m).collect::<Vec<_>>())?;
        let svd = svd_thin(&centered)?;

        let d = x.cols();
        let mut components = Matrix::zeros(k, d);
        for c in 0..k {
            let row = svd.vt.row(c);
            let pivot = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, v)| if v.abs() > row[best].abs() { j } else { best });
            let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
            for (dst, &v) in components.row_mut(c).iter_mut().zip(row) {
                *dst = sign * v;
            }
        }
        let denom = (x.rows() - 1) as f64;
        let explained_variance = svd.s[..k].iter().map(|s| s * s / denom).collect();
        Ok(Self {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    pub fn output_width(&self) -> usize {
        self.components.rows()
    }

    /// `(x − mean) · componentsᵀ`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "pca fitted on width {} applied to {} columns",
                self.input_width(),
                x.cols()
            )));
        }
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        x.add_row_broadcast(&neg)?.matmul_t(&self.components)
    }

    /// `y · components + mean`; exact inverse only when `k` equals the input width.
    pub fn inverse(&self, y: &Matrix) -> Result<Matrix> {
        y.matmul(&self.components)?.add_row_broadcast(&self.mean)
    }
}
