use crate::error::{Error, Result};

use super::layer::{LayerGrad, Layered};

/// Plain SGD: `p ← p − lr · g` on every layer of `model`.
///
/// All gradients are validated before any parameter moves, so a divergence
/// error leaves the model untouched.
pub fn sgd_step<M: Layered + ?Sized>(model: &mut M, grads: &[LayerGrad], learning_rate: f64) -> Result<()> {
    let mut layers = model.layers_mut();
    if layers.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} gradient blocks for {} layers",
            grads.len(),
            layers.len()
        )));
    }
    for (layer, g) in layers.iter().zip(grads) {
        if g.weights.shape() != layer.weights.shape() || g.bias.len() != layer.bias.len() {
            return Err(Error::Shape(format!(
                "gradient shape mismatch in layer `{}`",
                layer.name
            )));
        }
        if !g.is_finite() {
            return Err(Error::Divergence {
                layer: layer.name.clone(),
            });
        }
    }
    if learning_rate == 0.0 {
        return Ok(());
    }
    for (layer, g) in layers.iter_mut().zip(grads) {
        for (p, &d) in layer.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
            *p -= learning_rate * d;
        }
        for (p, &d) in layer.bias.iter_mut().zip(&g.bias) {
            *p -= learning_rate * d;
        }
        if !layer.is_finite() {
            return Err(Error::Divergence {
                layer: layer.name.clone(),
            });
        }
    }
    Ok(())
}
