use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{sample_standard_normal, Matrix, RngStream};

use super::layer::{Activation, DenseLayer, LayerGrad, Layered, Mlp, MlpCache};
use super::loss::kl_penalty;

/// Where the reparameterization noise comes from.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// Fresh N(0, I) from the stream (training).
    Draw(&'a RngStream),
    /// ε = 0, so z = μ (evaluation).
    Zero,
    /// Caller-supplied ε, e.g. frozen draws for gradient checks.
    Fixed(&'a Matrix),
}

/// Encoder producing a Gaussian embedding `z = μ + σ ⊙ ε` per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalEncoder {
    pub trunk: Mlp,
    pub mu_head: DenseLayer,
    pub sigma_head: DenseLayer,
}

/// One forward pass, kept whole for backprop.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub mu: Matrix,
    pub sigma: Matrix,
    pub eps: Matrix,
    pub z: Matrix,
    pub(crate) trunk_cache: MlpCache,
    pub(crate) trunk_out: Matrix,
    pub(crate) mu_pre: Matrix,
    pub(crate) sigma_pre: Matrix,
}

/// Parameter gradients in [`Layered`] order: trunk layers, μ head, σ head.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub trunk: Vec<LayerGrad>,
    pub mu_head: LayerGrad,
    pub sigma_head: LayerGrad,
}

impl EncoderGrads {
    pub fn layers(&self) -> Vec<&LayerGrad> {
        self.trunk.iter().chain([&self.mu_head, &self.sigma_head]).collect()
    }

    pub fn into_layers(self) -> Vec<LayerGrad> {
        let mut v = self.trunk;
        v.push(self.mu_head);
        v.push(self.sigma_head);
        v
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers().into_iter().flat_map(LayerGrad::flat).collect()
    }
}

/// `μ + σ ⊙ ε`.
pub fn reparameterize(mu: &Matrix, sigma: &Matrix, eps: &Matrix) -> Result<Matrix> {
    mu.add(&sigma.hadamard(eps)?)
}

impl VariationalEncoder {
    /// Trunk `input → hidden... (relu)`, then identity μ and softplus σ heads.
    pub fn new(input: usize, hidden: &[usize], embedding_dim: usize, stream: &RngStream) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        let trunk = Mlp::new("trunk", &widths, Activation::Relu, Activation::Relu, stream);
        let head_in = *widths.last().expect("nonempty");
        Self {
            trunk,
            mu_head: DenseLayer::xavier(
                "mu_head",
                head_in,
                embedding_dim,
                Activation::Identity,
                &stream.child("mu_head"),
            ),
            sigma_head: DenseLayer::xavier(
                "sigma_head",
                head_in,
                embedding_dim,
                Activation::Softplus,
                &stream.child("sigma_head"),
            ),
        }
    }

    pub fn input_width(&self) -> usize {
        self.trunk.input_width().unwrap_or(self.mu_head.fan_in())
    }

    pub fn embedding_dim(&self) -> usize {
        self.mu_head.fan_out()
    }

    pub fn forward(&self, x: &Matrix, noise: Noise<'_>) -> Result<EncoderOutput> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "encoder expects {} inputs, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let (trunk_out, trunk_cache) = self.trunk.forward(x)?;
        let (mu_pre, mu) = self.mu_head.forward(&trunk_out)?;
        let (sigma_pre, sigma) = self.sigma_head.forward(&trunk_out)?;
        let eps = match noise {
            Noise::Draw(stream) => sample_standard_normal(stream, mu.rows(), mu.cols()),
            Noise::Zero => Matrix::zeros(mu.rows(), mu.cols()),
            Noise::Fixed(eps) => {
                if eps.shape() != mu.shape() {
                    return Err(Error::Shape(format!(
                        "fixed noise {:?}, embedding {:?}",
                        eps.shape(),
                        mu.shape()
                    )));
                }
                eps.clone()
            }
        };
        let z = match noise {
            Noise::Zero => mu.clone(),
            _ => reparameterize(&mu, &sigma, &eps)?,
        };
        Ok(EncoderOutput {
            mu,
            sigma,
            eps,
            z,
            trunk_cache,
            trunk_out,
            mu_pre,
            sigma_pre,
        })
    }

    /// Gradients given dL/dz: dL/dμ = dL/dz and dL/dσ = dL/dz ⊙ ε.
    pub fn backward(&self, out: &EncoderOutput, d_z: &Matrix) -> Result<EncoderGrads> {
        if d_z.shape() != out.z.shape() {
            return Err(Error::Shape(format!(
                "dL/dz {:?}, embedding {:?}",
                d_z.shape(),
                out.z.shape()
            )));
        }
        let d_sigma = d_z.hadamard(&out.eps)?;
        self.backward_heads(out, d_z, &d_sigma)
    }

    /// Like [`VariationalEncoder::backward`] plus the β-weighted KL term.
    /// Returns the gradients and the KL value added to the loss.
    pub fn backward_with_kl(&self, out: &EncoderOutput, d_z: &Matrix, beta: f64) -> Result<(EncoderGrads, f64)> {
        if beta == 0.0 {
            return Ok((self.backward(out, d_z)?, 0.0));
        }
        if d_z.shape() != out.z.shape() {
            return Err(Error::Shape(format!(
                "dL/dz {:?}, embedding {:?}",
                d_z.shape(),
                out.z.shape()
            )));
        }
        let kl = kl_penalty(&out.mu, &out.sigma, beta)?;
        let d_mu = d_z.add(&kl.d_mu)?;
        let d_sigma = d_z.hadamard(&out.eps)?.add(&kl.d_sigma)?;
        Ok((self.backward_heads(out, &d_mu, &d_sigma)?, kl.value))
    }

    fn backward_heads(&self, out: &EncoderOutput, d_mu: &Matrix, d_sigma: &Matrix) -> Result<EncoderGrads> {
        let (mu_head, d_trunk_mu) = self.mu_head.backward(&out.trunk_out, &out.mu_pre, &out.mu, d_mu)?;
        let (sigma_head, d_trunk_sigma) =
            self.sigma_head
                .backward(&out.trunk_out, &out.sigma_pre, &out.sigma, d_sigma)?;
        let d_trunk = d_trunk_mu.add(&d_trunk_sigma)?;
        let (trunk, _) = self.trunk.backward(&out.trunk_cache, &d_trunk)?;
        Ok(EncoderGrads {
            trunk,
            mu_head,
            sigma_head,
        })
    }
}

impl Layered for VariationalEncoder {
    fn layers(&self) -> Vec<&DenseLayer> {
        self.trunk
            .layers
            .iter()
            .chain([&self.mu_head, &self.sigma_head])
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.trunk
            .layers
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.sigma_head])
            .collect()
    }
}

/// Classifier over the concatenated embeddings, ending in one sigmoid unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalNet {
    pub mlp: Mlp,
}

impl GlobalNet {
    pub fn new(input: usize, hidden: &[usize], stream: &RngStream) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self {
            mlp: Mlp::new("global", &widths, Activation::Relu, Activation::Sigmoid, stream),
        }
    }

    pub fn input_width(&self) -> usize {
        self.mlp.input_width().expect("global net has layers")
    }

    /// Probabilities as a `batch × 1` matrix, plus the backprop cache.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.mlp.forward(x)
    }

    pub fn backward(&self, cache: &MlpCache, d_pred: &Matrix) -> Result<(Vec<LayerGrad>, Matrix)> {
        self.mlp.backward(cache, d_pred)
    }
}

impl Layered for GlobalNet {
    fn layers(&self) -> Vec<&DenseLayer> {
        self.mlp.layers()
    }

    fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        self.mlp.layers_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::sample_uniform;

    fn encoder() -> VariationalEncoder {
        VariationalEncoder::new(5, &[6], 3, &RngStream::new(21).child("enc"))
    }

    #[test]
    fn eval_mode_returns_mu() {
        let enc = encoder();
        let x = sample_uniform(&RngStream::new(1), 4, 5, -1.0, 1.0);
        let out = enc.forward(&x, Noise::Zero).unwrap();
        assert_eq!(out.z, out.mu);
        assert!(out.eps.as_slice().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_sigma_gives_mu() {
        let mu = Matrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let eps = Matrix::from_rows(&[[0.3, 5.0]]).unwrap();
        assert_eq!(reparameterize(&mu, &Matrix::zeros(1, 2), &eps).unwrap(), mu);
    }

    #[test]
    fn train_mode_reconstruction_identity() {
        let enc = encoder();
        let x = sample_uniform(&RngStream::new(2), 6, 5, -1.0, 1.0);
        let out = enc.forward(&x, Noise::Draw(&RngStream::new(3))).unwrap();
        let diff = out.z.sub(&out.mu).unwrap();
        assert!(diff.max_abs_diff(&out.sigma.hadamard(&out.eps).unwrap()) < 1e-12);
        assert!(out.sigma.as_slice().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let enc = encoder();
        let x = sample_uniform(&RngStream::new(2), 6, 5, -1.0, 1.0);
        let out = enc.forward(&x, Noise::Draw(&RngStream::new(3))).unwrap();
        let g = enc.backward(&out, &Matrix::zeros(6, 3)).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_noise_leaves_sigma_head_without_gradient() {
        let enc = encoder();
        let x = sample_uniform(&RngStream::new(2), 6, 5, -1.0, 1.0);
        let out = enc.forward(&x, Noise::Zero).unwrap();
        let dz = sample_uniform(&RngStream::new(4), 6, 3, -1.0, 1.0);
        let g = enc.backward(&out, &dz).unwrap();
        assert!(g.sigma_head.flat().all(|v| v == 0.0));
        assert!(g.mu_head.flat().any(|v| v != 0.0));
    }

    #[test]
    fn fixed_noise_shape_checked() {
        let enc = encoder();
        let x = Matrix::zeros(2, 5);
        let bad = Matrix::zeros(3, 3);
        assert!(matches!(enc.forward(&x, Noise::Fixed(&bad)), Err(Error::Shape(_))));
        assert!(matches!(
            enc.forward(&Matrix::zeros(2, 4), Noise::Zero),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn global_net_output_in_unit_interval() {
        let net = GlobalNet::new(6, &[16], &RngStream::new(5));
        let x = sample_uniform(&RngStream::new(6), 10, 6, -50.0, 50.0);
        let (p, _) = net.forward(&x).unwrap();
        assert_eq!(p.shape(), (10, 1));
        assert!(p.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn sampled_embeddings_have_encoder_moments() {
        // Identical rows share μ and σ, so the column statistics of z over many
        // rows estimate them.
        let enc = encoder();
        let row = sample_uniform(&RngStream::new(7), 1, 5, -1.0, 1.0);
        let n = 10_000;
        let x = Matrix::from_vec(n, 5, row.as_slice().repeat(n)).unwrap();
        let out = enc.forward(&x, Noise::Draw(&RngStream::new(8))).unwrap();
        let mean = out.z.column_means();
        for (j, &m) in mean.iter().enumerate() {
            let (mu, sigma) = (out.mu[(0, j)], out.sigma[(0, j)]);
            let var = (0..n).map(|i| (out.z[(i, j)] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((m - mu).abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {m} vs {mu}");
            assert!((var.sqrt() / sigma - 1.0).abs() < 0.05, "std {} vs {sigma}", var.sqrt());
        }
    }
}
