use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Predictions are clamped into `[PRED_CLAMP, 1 − PRED_CLAMP]` before the log.
pub const PRED_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over a `batch × 1` prediction column.
///
/// Returns the loss and dL/dpred (evaluated at the clamped prediction).
pub fn bce_loss(pred: &Matrix, labels: &[u8]) -> Result<(f64, Matrix)> {
    if pred.cols() != 1 || pred.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "bce over predictions {:?} and {} labels",
            pred.shape(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), 1);
    for (i, (&p, &y)) in pred.as_slice().iter().zip(labels).enumerate() {
        let p = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        let y = f64::from(y);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad[(i, 0)] = (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
    Ok((loss / n, grad))
}

/// β-weighted KL of N(μ, σ²) against N(0, I), averaged over the batch.
#[derive(Debug, Clone)]
pub struct KlTerm {
    pub value: f64,
    pub d_mu: Matrix,
    pub d_sigma: Matrix,
}

/// `β · mean_b ½ Σ_j (σ² + μ² − 1 − 2 ln σ)` with exact gradients.
/// β = 0 yields exact zeros.
pub fn kl_penalty(mu: &Matrix, sigma: &Matrix, beta: f64) -> Result<KlTerm> {
    if mu.shape() != sigma.shape() {
        return Err(Error::Shape(format!(
            "kl over mu {:?} and sigma {:?}",
            mu.shape(),
            sigma.shape()
        )));
    }
    if beta == 0.0 {
        return Ok(KlTerm {
            value: 0.0,
            d_mu: Matrix::zeros(mu.rows(), mu.cols()),
            d_sigma: Matrix::zeros(mu.rows(), mu.cols()),
        });
    }
    if let Some(s) = sigma.as_slice().iter().find(|&&s| s <= 0.0) {
        return Err(Error::Numerical(format!("sigma {s} is not positive")));
    }
    let batch = mu.rows().max(1) as f64;
    let scale = beta / batch;
    let value = scale
        * 0.5
        * mu.as_slice()
            .iter()
            .zip(sigma.as_slice())
            .map(|(&m, &s)| s * s + m * m - 1.0 - 2.0 * s.ln())
            .sum::<f64>();
    Ok(KlTerm {
        value,
        d_mu: mu.scale(scale),
        d_sigma: sigma.map(|s| scale * (s - 1.0 / s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{sample_uniform, RngStream};

    #[test]
    fn half_prediction_costs_ln2() {
        let (l, _) = bce_loss(&Matrix::filled(3, 1, 0.5), &[0, 1, 1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_hits_clamp_floor() {
        let pred = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let (l, _) = bce_loss(&pred, &[1, 0]).unwrap();
        assert!(l > 0.0 && l < 2e-7, "{l}");
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let pred = sample_uniform(&RngStream::new(1), 8, 1, 0.05, 0.95);
        let labels = [0, 1, 1, 0, 1, 0, 0, 1];
        let (_, g) = bce_loss(&pred, &labels).unwrap();
        let h = 1e-6;
        for i in 0..8 {
            let mut up = pred.clone();
            up[(i, 0)] += h;
            let mut dn = pred.clone();
            dn[(i, 0)] -= h;
            let fd = (bce_loss(&up, &labels).unwrap().0 - bce_loss(&dn, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - g[(i, 0)]).abs() < 1e-6, "{fd} vs {}", g[(i, 0)]);
        }
    }

    #[test]
    fn standard_normal_has_zero_kl() {
        let t = kl_penalty(&Matrix::zeros(4, 3), &Matrix::filled(4, 3, 1.0), 0.7).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn disabled_kl_is_exact_zero() {
        let mu = sample_uniform(&RngStream::new(2), 4, 3, -1.0, 1.0);
        let sigma = sample_uniform(&RngStream::new(3), 4, 3, 0.1, 2.0);
        let t = kl_penalty(&mu, &sigma, 0.0).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.d_mu.as_slice().iter().chain(t.d_sigma.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mu = sample_uniform(&RngStream::new(4), 5, 2, -1.0, 1.0);
        let sigma = sample_uniform(&RngStream::new(5), 5, 2, 0.2, 2.0);
        let beta = 0.3;
        let t = kl_penalty(&mu, &sigma, beta).unwrap();
        let h = 1e-6;
        for i in 0..10 {
            let mut up = mu.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = mu.clone();
            dn.as_mut_slice()[i] -= h;
            let fd = (kl_penalty(&up, &sigma, beta).unwrap().value - kl_penalty(&dn, &sigma, beta).unwrap().value)
                / (2.0 * h);
            assert!((fd - t.d_mu.as_slice()[i]).abs() < 1e-6);

            let mut up = sigma.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = sigma.clone();
            dn.as_mut_slice()[i] -= h;
            let fd =
                (kl_penalty(&mu, &up, beta).unwrap().value - kl_penalty(&mu, &dn, beta).unwrap().value) / (2.0 * h);
            assert!((fd - t.d_sigma.as_slice()[i]).abs() < 1e-6);
        }
    }
}
