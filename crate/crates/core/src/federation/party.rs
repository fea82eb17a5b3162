use serde::{Deserialize, Serialize};

use crate::dataio::{align_industry, CompanyView, IdRows};
use crate::error::{Error, Result};
use crate::nets::{bce_loss, sgd_step, Architecture, EncoderOutput, GlobalNet, LayerGrad, Noise, VariationalEncoder};
use crate::numkernel::{Matrix, RngStream};
use crate::transform::{company_pipeline, CompanyTransform, PipelineConfig};

use super::codec::{Message, Split};
use super::transport::Link;

/// Aligned, transformed, tagged rows held by one industry server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryBatch {
    pub industry: usize,
    pub customer_ids: Vec<u64>,
    pub features: Matrix,
}

impl IndustryBatch {
    pub fn len(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customer_ids.is_empty()
    }

    /// True if the last `n_companies` columns of every row hold exactly one 1 and zeros elsewhere.
    pub fn tags_are_one_hot(&self, n_companies: usize) -> bool {
        let w = self.features.cols();
        n_companies <= w
            && (0..self.features.rows()).all(|r| {
                let tag = &self.features.row(r)[w - n_companies..];
                tag.iter().filter(|&&v| v == 1.0).count() == 1 && tag.iter().all(|&v| v == 0.0 || v == 1.0)
            })
    }
}

/// A data owner. It only fits transforms and uploads; it never trains.
#[derive(Debug, Clone)]
pub struct CompanyNode {
    pub industry: usize,
    pub company: usize,
    pub n_companies: usize,
    pub train: CompanyView,
    pub test: CompanyView,
    transform: Option<CompanyTransform>,
    train_transformed: Option<Matrix>,
}

impl CompanyNode {
    pub fn new(train: CompanyView, test: CompanyView, n_companies: usize) -> Result<Self> {
        if (train.industry, train.company) != (test.industry, test.company) {
            return Err(Error::Data(format!(
                "train view of company ({}, {}) paired with test view of ({}, {})",
                train.industry, train.company, test.industry, test.company
            )));
        }
        Ok(Self {
            industry: train.industry,
            company: train.company,
            n_companies,
            train,
            test,
            transform: None,
            train_transformed: None,
        })
    }

    /// RNG path owned by this company.
    pub fn stream(root: &RngStream, industry: usize, company: usize) -> RngStream {
        root.child(format!("industry:{industry}/company:{company}"))
    }

    /// Fits every stage on the training rows only.
    pub fn fit(&mut self, config: &PipelineConfig, root: &RngStream) -> Result<()> {
        let stream = Self::stream(root, self.industry, self.company);
        let (transform, rows) = company_pipeline(&self.train, config, self.n_companies, &stream)?;
        self.transform = Some(transform);
        self.train_transformed = Some(rows);
        Ok(())
    }

    pub fn transform(&self) -> Option<&CompanyTransform> {
        self.transform.as_ref()
    }

    fn fitted(&self) -> Result<&CompanyTransform> {
        self.transform.as_ref().ok_or_else(|| {
            Error::State(format!(
                "company {} of industry {} has no fitted transform",
                self.company, self.industry
            ))
        })
    }

    /// The transformed upload for `split`; raw features never leave this node.
    pub fn upload(&self, split: Split) -> Result<Message> {
        let transform = self.fitted()?;
        let (ids, rows) = match split {
            Split::Train => (
                self.train.customer_ids.clone(),
                self.train_transformed.clone().expect("set together with transform"),
            ),
            Split::Test => (self.test.customer_ids.clone(), transform.apply(&self.test.features)?),
            Split::Query => return Err(Error::State("query uploads need explicit rows".into())),
        };
        Ok(self.upload_message(split, ids, rows))
    }

    /// Transforms previously unseen rows with the already-fitted stages.
    pub fn query_upload(&self, view: &CompanyView) -> Result<Message> {
        let transform = self.fitted()?;
        let rows = transform.apply(&view.features)?;
        Ok(self.upload_message(Split::Query, view.customer_ids.clone(), rows))
    }

    fn upload_message(&self, split: Split, ids: Vec<u64>, rows: Matrix) -> Message {
        Message::CompanyUpload {
            industry: self.industry as u32,
            company: self.company as u32,
            split,
            ids,
            rows,
        }
    }
}

/// Training hyperparameters shared by every party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub beta: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            learning_rate: 0.05,
            beta: 1e-3,
            batch_size: None,
        }
    }
}

/// Final state of an industry server.
#[derive(Debug, Clone)]
pub struct IndustryServer {
    pub index: usize,
    pub n_companies: usize,
    pub encoder: VariationalEncoder,
    pub train: IndustryBatch,
    pub test: IndustryBatch,
    /// Logical clock after the last encoder update.
    pub clock: u64,
    pub updates: u64,
}

/// Output of the global server's forward and backward pass on one batch.
#[derive(Debug, Clone)]
pub struct GlobalPass {
    pub loss: f64,
    pub predictions: Matrix,
    pub grads: Vec<LayerGrad>,
    /// dL/dz for each industry, in industry order.
    pub d_embeddings: Vec<Matrix>,
}

/// Concatenates `embeddings` in the given (industry) order, forward-props, and
/// backpropagates BCE through the current weights.
pub fn global_pass(net: &GlobalNet, embeddings: &[Matrix], labels: &[u8]) -> Result<GlobalPass> {
    let refs: Vec<&Matrix> = embeddings.iter().collect();
    let joined = Matrix::hstack(&refs)?;
    let (predictions, cache) = net.forward(&joined)?;
    let (loss, d_pred) = bce_loss(&predictions, labels)?;
    let (grads, d_joined) = net.backward(&cache, &d_pred)?;
    let widths: Vec<usize> = embeddings.iter().map(Matrix::cols).collect();
    Ok(GlobalPass {
        loss,
        predictions,
        grads,
        d_embeddings: split_columns(&d_joined, &widths),
    })
}

/// Slices `m` into consecutive column blocks of the given widths.
pub fn split_columns(m: &Matrix, widths: &[usize]) -> Vec<Matrix> {
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let block = m.col_range(start, start + w);
            start += w;
            block
        })
        .collect()
}

/// Fraction of rows whose thresholded prediction (≥ 0.5 means 1) equals the label.
pub fn accuracy(predictions: &Matrix, labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predictions
        .as_slice()
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Encoder-side half of a round: backprop dL/dz (+ KL) and apply SGD.
/// Returns the KL contribution.
pub fn encoder_update(
    encoder: &mut VariationalEncoder,
    out: &EncoderOutput,
    d_z: &Matrix,
    beta: f64,
    learning_rate: f64,
) -> Result<f64> {
    let (grads, kl) = encoder.backward_with_kl(out, d_z, beta)?;
    sgd_step(encoder, &grads.into_layers(), learning_rate)?;
    Ok(kl)
}

/// RNG path for an industry's reparameterization noise in one round.
pub fn eps_stream(root: &RngStream, industry: usize, round: u32) -> RngStream {
    root.child(format!("industry:{industry}/eps/round:{round}"))
}

pub fn encoder_stream(root: &RngStream, industry: usize) -> RngStream {
    root.child(format!("industry:{industry}/encoder"))
}

pub fn global_stream(root: &RngStream) -> RngStream {
    root.child("global/init")
}

/// The thread-side driver of one industry server.
pub(crate) struct IndustryActor {
    pub index: usize,
    pub n_companies: usize,
    pub companies: Vec<Box<dyn Link>>,
    pub global: Box<dyn Link>,
    pub root: RngStream,
    pub training: TrainingConfig,
}

impl IndustryActor {
    pub fn run(mut self) -> Result<IndustryServer> {
        let mut round = 0;
        let result = self.serve(&mut round);
        if let Err(e) = &result {
            let _ = self.global.send(&Message::Fault {
                round,
                reason: e.to_string(),
            });
        }
        result
    }

    fn serve(&mut self, round: &mut u32) -> Result<IndustryServer> {
        let train = self.collect(Split::Train)?;
        let test = self.collect(Split::Test)?;
        if test.features.cols() != train.features.cols() && !test.is_empty() {
            return Err(Error::Protocol(format!(
                "industry {}: test width {} differs from train width {}",
                self.index,
                test.features.cols(),
                train.features.cols()
            )));
        }
        for (split, batch) in [(Split::Train, &train), (Split::Test, &test)] {
            self.global.send(&Message::AlignedIds {
                industry: self.index as u32,
                split,
                ids: batch.customer_ids.clone(),
            })?;
        }
        let arch = &self.training.architecture;
        let encoder = VariationalEncoder::new(
            train.features.cols(),
            &arch.encoder_hidden,
            arch.embedding_dim,
            &encoder_stream(&self.root, self.index),
        );
        let mut state = IndustryServer {
            index: self.index,
            n_companies: self.n_companies,
            encoder,
            train,
            test,
            clock: 0,
            updates: 0,
        };
        loop {
            match self.global.recv()? {
                Message::RoundStart { round: r, rows } => {
                    *round = r;
                    self.train_round(&mut state, r, &rows)?;
                }
                Message::EvalRequest { round: r, split } => {
                    *round = r;
                    let query;
                    let batch = match split {
                        Split::Train => &state.train,
                        Split::Test => &state.test,
                        Split::Query => {
                            query = self.collect(Split::Query)?;
                            self.global.send(&Message::AlignedIds {
                                industry: self.index as u32,
                                split,
                                ids: query.customer_ids.clone(),
                            })?;
                            &query
                        }
                    };
                    let out = state.encoder.forward(&batch.features, Noise::Zero)?;
                    self.send_embedding(r, out.z)?;
                }
                Message::CompanyUpload { .. } => {
                    return Err(Error::Protocol(format!(
                        "industry {}: company upload on the global link",
                        self.index
                    )))
                }
                Message::Shutdown { .. } => return Ok(state),
                Message::Fault { reason, .. } => {
                    return Err(Error::Protocol(format!("global server failed: {reason}")))
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "industry {} got unexpected {}",
                        self.index,
                        other.kind()
                    )))
                }
            }
        }
    }

    /// Receives one upload of `split` from every company and aligns them by customer id.
    fn collect(&mut self, split: Split) -> Result<IndustryBatch> {
        let mut parts = Vec::with_capacity(self.companies.len());
        for (j, link) in self.companies.iter_mut().enumerate() {
            match link.recv()? {
                Message::CompanyUpload {
                    industry,
                    company,
                    split: got,
                    ids,
                    rows,
                } => {
                    if industry as usize != self.index || company as usize != j {
                        return Err(Error::Protocol(format!(
                            "industry {} link {j} carried an upload from ({industry}, {company})",
                            self.index
                        )));
                    }
                    if got != split {
                        return Err(Error::Protocol(format!(
                            "duplicate {got:?} upload from company {j} of industry {} (expected {split:?})",
                            self.index
                        )));
                    }
                    parts.push(IdRows::new(ids, rows)?);
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "industry {} expected an upload from company {j}, got {}",
                        self.index,
                        other.kind()
                    )))
                }
            }
        }
        let aligned = align_industry(&parts)?;
        Ok(IndustryBatch {
            industry: self.index,
            customer_ids: aligned.ids,
            features: aligned.rows,
        })
    }

    fn train_round(&mut self, state: &mut IndustryServer, round: u32, rows: &[u64]) -> Result<()> {
        let selected;
        let x = if rows.is_empty() {
            &state.train.features
        } else {
            let n = state.train.len();
            let idx = rows
                .iter()
                .map(|&r| {
                    usize::try_from(r)
                        .ok()
                        .filter(|&r| r < n)
                        .ok_or_else(|| Error::Protocol(format!("batch row {r} outside {n} aligned rows")))
                })
                .collect::<Result<Vec<_>>>()?;
            selected = state.train.features.select_rows(&idx);
            &selected
        };
        let out = state
            .encoder
            .forward(x, Noise::Draw(&eps_stream(&self.root, self.index, round)))?;
        self.send_embedding(round, out.z.clone())?;
        let (clock, grad) = match self.global.recv()? {
            Message::GradientDown {
                industry,
                round: r,
                clock,
                grad,
            } if industry as usize == self.index && r == round => (clock, grad),
            Message::Fault { reason, .. } => return Err(Error::Protocol(format!("global server failed: {reason}"))),
            other => {
                return Err(Error::Protocol(format!(
                    "industry {} expected GradientDown for round {round}, got {} for round {}",
                    self.index,
                    other.kind(),
                    other.round()
                )))
            }
        };
        if grad.shape() != out.z.shape() {
            return Err(Error::Protocol(format!(
                "industry {}: gradient {:?} for embedding {:?}",
                self.index,
                grad.shape(),
                out.z.shape()
            )));
        }
        let kl = encoder_update(
            &mut state.encoder,
            &out,
            &grad,
            self.training.beta,
            self.training.learning_rate,
        )?;
        state.clock = state.clock.max(clock) + 1;
        state.updates += 1;
        self.global.send(&Message::EncoderReport {
            industry: self.index as u32,
            round,
            clock: state.clock,
            kl,
        })
    }

    fn send_embedding(&mut self, round: u32, z: Matrix) -> Result<()> {
        self.global.send(&Message::EmbeddingUp {
            industry: self.index as u32,
            round,
            z,
        })
    }
}
