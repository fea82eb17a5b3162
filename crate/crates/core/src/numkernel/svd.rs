use crate::error::{Error, Result};

use super::Matrix;

/// Hard cap on Jacobi sweeps; well-conditioned inputs converge in under 15.
pub const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `a = U · diag(s) · Vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// `k` singular values, nonincreasing, nonnegative.
    pub s: Vec<f64>,
    /// `k × cols`, orthonormal rows.
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_vec(
            self.u.rows(),
            self.u.cols(),
            (0..self.u.rows())
                .flat_map(|r| {
                    let row = self.u.row(r);
                    row.iter().zip(&self.s).map(|(u, s)| u * s).collect::<Vec<_>>()
                })
                .collect(),
        )
        .expect("finite");
        us.matmul(&self.vt).expect("conforming factors")
    }
}

/// One-sided (Hestenes) Jacobi SVD with `k = min(rows, cols)`.
///
/// Fails with a numerical error if rotations have not died out after
/// [`MAX_SWEEPS`] sweeps.
pub fn svd_thin(a: &Matrix) -> Result<Svd> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Shape(format!("svd of empty {}x{} matrix", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::Numerical("svd input has non-finite entries".into()));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn jacobi_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Column-major working copies.
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = 1e-15;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "jacobi svd did not converge within {MAX_SWEEPS} sweeps on {m}x{n} input"
        )));
    }

    let norms: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s_max = norms[order[0]];
    let cutoff = s_max * 1e-12;

    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for &j in &order {
        if norms[j] > cutoff && norms[j] > 0.0 {
            u_cols.push(Some(w[j].iter().map(|x| x / norms[j]).collect()));
        } else {
            u_cols.push(None);
        }
    }
    complete_orthonormal(&mut u_cols, m);

    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let col = u_cols[k].as_ref().expect("completed");
        for r in 0..m {
            u[(r, k)] = col[r];
        }
        for c in 0..n {
            vt[(k, c)] = v[j][c];
        }
    }
    let s = order.iter().map(|&j| norms[j]).collect();
    Ok(Svd { u, s, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    let mut basis_index = 0;
    for k in 0..cols.len() {
        if cols[k].is_some() {
            continue;
        }
        while basis_index < m {
            let mut cand = vec![0.0; m];
            cand[basis_index] = 1.0;
            basis_index += 1;
            // Two Gram-Schmidt passes for numerical orthogonality.
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let d = dot(&cand, other);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= d * o;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                cand.iter_mut().for_each(|c| *c /= norm);
                cols[k] = Some(cand);
                break;
            }
        }
    }
}
