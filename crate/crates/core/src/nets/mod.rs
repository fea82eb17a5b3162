//! Feedforward networks with hand-written backprop: dense layers, the
//! variational industry encoder, the global classifier, losses, SGD, and a
//! finite-difference gradient checker.

mod encoder;
mod gradcheck;
mod layer;
mod loss;
mod optim;
mod snapshot;

pub use encoder::{reparameterize, EncoderGrads, EncoderOutput, GlobalNet, Noise, VariationalEncoder};
pub use gradcheck::{finite_difference_check, GradCheckReport, RELATIVE_FLOOR};
pub use layer::{flatten_grads, Activation, DenseLayer, LayerGrad, Layered, Mlp, MlpCache};
pub use loss::{bce_loss, kl_penalty, KlTerm, PRED_CLAMP};
pub use optim::sgd_step;
pub use snapshot::{ParamSnapshot, ParamTensor};

/// Layer widths for the encoders and the global classifier.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub global_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![16],
            embedding_dim: 4,
            global_hidden: vec![16],
        }
    }
}
