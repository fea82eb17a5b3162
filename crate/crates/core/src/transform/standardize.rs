use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Columns whose spread falls below this are treated as constant.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-scoring fitted on training rows.
///
/// Uses the population standard deviation (divide by `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizeModel {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Shape("standardize fit on zero rows".into()));
        }
        let mean = x.column_means();
        let n = x.rows() as f64;
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((v, &m), &xv) in var.iter_mut().zip(&mean).zip(x.row(r)) {
                *v += (xv - m) * (xv - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std` per column; constant columns become exactly zero.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::Shape(format!(
                "standardize model of width {} applied to {} columns",
                self.width(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if s <= STD_FLOOR { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{sample_uniform, RngStream};

    #[test]
    fn standardized_input_is_fixed_point() {
        let x = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let m = StandardizeModel::fit(&x).unwrap();
        assert!(m.apply(&x).unwrap().max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::from_rows(&[[0.1, 1.0], [0.1, 2.0], [0.1, 4.0]]).unwrap();
        let out = StandardizeModel::fit(&x).unwrap().apply(&x).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_columns_get_unit_moments() {
        let x = sample_uniform(&RngStream::new(4).child("std"), 50, 4, -3.0, 10.0);
        let out = StandardizeModel::fit(&x).unwrap().apply(&x).unwrap();
        for c in 0..4 {
            let col = out.column(c);
            let mean = col.iter().sum::<f64>() / 50.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn width_mismatch() {
        let m = StandardizeModel::fit(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(m.apply(&Matrix::zeros(2, 2)), Err(Error::Shape(_))));
    }
}
