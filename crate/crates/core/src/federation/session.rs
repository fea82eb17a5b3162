use std::collections::{BTreeSet, HashMap};
use std::thread::JoinHandle;

use crate::dataio::{check_same_ids, CompanyView};
use crate::error::{Error, Result, TransportError};
use crate::nets::{bce_loss, sgd_step, GlobalNet};
use crate::numkernel::{Matrix, RngStream};
use crate::par::Execution;
use crate::transform::PipelineConfig;

use super::codec::{Message, Split};
use super::party::{accuracy, global_pass, global_stream, CompanyNode, IndustryActor, IndustryServer, TrainingConfig};
use super::transport::{link_pair, FrameLog, Link, TransportKind};

/// Everything a session needs besides the data.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub training: TrainingConfig,
    pub pipeline: PipelineConfig,
    pub transport: TransportKind,
    /// Scheduling of the per-company transform fits.
    pub execution: Execution,
    /// Root of every RNG path in the session.
    pub rng: RngStream,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            pipeline: PipelineConfig::default(),
            transport: TransportKind::Inproc,
            execution: Execution::default(),
            rng: RngStream::new(1),
        }
    }
}

/// The data side of a session: every company's train and test rows, and the
/// labels known to the global server.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub companies_per_industry: Vec<usize>,
    /// `(train, test)` views, in any order.
    pub companies: Vec<(CompanyView, CompanyView)>,
    pub labels: HashMap<u64, u8>,
}

/// Where the current round is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    CollectEmbeddings,
    GlobalUpdate,
    ScatterGradients,
    EncoderUpdate,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::CollectEmbeddings => "collect_embeddings",
            Phase::GlobalUpdate => "global_update",
            Phase::ScatterGradients => "scatter_gradients",
            Phase::EncoderUpdate => "encoder_update",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    pub round: u32,
    pub phase: Phase,
    /// Industries heard from in the current phase.
    pub received: BTreeSet<usize>,
}

impl RoundState {
    fn enter(&mut self, phase: Phase) {
        debug_assert!(phase > self.phase || phase == Phase::CollectEmbeddings);
        self.phase = phase;
        self.received.clear();
    }
}

/// Summary the global server produces at the end of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub round: u32,
    /// BCE plus every industry's KL contribution.
    pub loss: f64,
    /// Train-mode accuracy on the round's batch.
    pub accuracy: f64,
}

/// Which party changed its parameters, in logical-clock order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Updater {
    Global,
    Industry(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateEvent {
    pub round: u32,
    pub party: Updater,
    pub clock: u64,
}

/// Eval-mode predictions on one split, in aligned customer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub customer_ids: Vec<u64>,
    pub labels: Vec<u8>,
    pub probabilities: Vec<f64>,
    pub loss: f64,
    pub accuracy: f64,
}

/// The global server's state.
#[derive(Debug, Clone)]
pub struct GlobalServer {
    pub net: GlobalNet,
    pub train_ids: Vec<u64>,
    pub train_labels: Vec<u8>,
    pub test_ids: Vec<u64>,
    pub test_labels: Vec<u8>,
    pub clock: u64,
}

/// Party states handed back by [`Session::shutdown`].
#[derive(Debug, Clone)]
pub struct PartyStates {
    pub global: GlobalServer,
    pub industries: Vec<IndustryServer>,
    pub companies: Vec<CompanyNode>,
    pub updates: Vec<UpdateEvent>,
}

/// A wired party graph: companies, one thread per industry server, and the
/// global server driven from the calling thread.
pub struct Session {
    config: SessionConfig,
    root: RngStream,
    global: GlobalServer,
    labels: HashMap<u64, u8>,
    links: Vec<Box<dyn Link>>,
    company_links: Vec<Vec<Box<dyn Link>>>,
    companies: Vec<CompanyNode>,
    handles: Vec<JoinHandle<Result<IndustryServer>>>,
    state: RoundState,
    updates: Vec<UpdateEvent>,
    epoch: u32,
}

fn company_order(data: &SessionData) -> Result<Vec<usize>> {
    let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, (train, _)) in data.companies.iter().enumerate() {
        let key = (train.industry, train.company);
        let n = *data.companies_per_industry.get(key.0).ok_or_else(|| {
            Error::Data(format!(
                "company {} belongs to industry {} but only {} industries exist",
                key.1,
                key.0,
                data.companies_per_industry.len()
            ))
        })?;
        if key.1 >= n {
            return Err(Error::Company { index: key.1, count: n });
        }
        if slot.insert(key, k).is_some() {
            return Err(Error::Protocol(format!(
                "company {} of industry {} registered twice",
                key.1, key.0
            )));
        }
    }
    let mut order = Vec::new();
    for (i, &n) in data.companies_per_industry.iter().enumerate() {
        if n == 0 {
            return Err(Error::Config(format!("industry {i} has no companies")));
        }
        for j in 0..n {
            order.push(
                *slot
                    .get(&(i, j))
                    .ok_or_else(|| Error::Data(format!("company {j} of industry {i} is missing")))?,
            );
        }
    }
    Ok(order)
}

impl Session {
    /// Fits every company's transforms on its training rows, delivers the
    /// uploads once, aligns each industry, and initializes every model.
    pub fn setup(data: SessionData, config: SessionConfig) -> Result<Self> {
        Self::setup_with_log(data, config, None)
    }

    /// As [`Session::setup`], recording every frame on every link into `log`.
    pub fn setup_with_log(data: SessionData, config: SessionConfig, log: Option<&FrameLog>) -> Result<Self> {
        if data.companies_per_industry.is_empty() {
            return Err(Error::Config("at least one industry is required".into()));
        }
        let order = company_order(&data)?;
        let root = config.rng.clone();
        let SessionData {
            companies_per_industry,
            companies,
            labels,
        } = data;
        let mut slots: Vec<Option<(CompanyView, CompanyView)>> = companies.into_iter().map(Some).collect();
        let nodes = order
            .iter()
            .map(|&k| {
                let (train, test) = slots[k].take().expect("order is a permutation");
                let n = companies_per_industry[train.industry];
                CompanyNode::new(train, test, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let pipeline = config.pipeline;
        let nodes = config.execution.try_map(nodes, |mut node| {
            node.fit(&pipeline, &root)?;
            Ok::<_, Error>(node)
        })?;

        let m = companies_per_industry.len();
        let mut links = Vec::with_capacity(m);
        let mut company_links = Vec::with_capacity(m);
        let mut handles = Vec::with_capacity(m);
        for (i, &n) in companies_per_industry.iter().enumerate() {
            let (global_end, industry_end) = link_pair(config.transport, log)?;
            let mut driver_ends = Vec::with_capacity(n);
            let mut server_ends = Vec::with_capacity(n);
            for _ in 0..n {
                let (c, s) = link_pair(config.transport, log)?;
                driver_ends.push(c);
                server_ends.push(s);
            }
            let actor = IndustryActor {
                index: i,
                n_companies: n,
                companies: server_ends,
                global: industry_end,
                root: root.clone(),
                training: config.training.clone(),
            };
            let handle = std::thread::Builder::new()
                .name(format!("industry-{i}"))
                .spawn(move || actor.run())
                .map_err(|e| Error::State(format!("cannot spawn industry server {i}: {e}")))?;
            links.push(global_end);
            company_links.push(driver_ends);
            handles.push(handle);
        }

        let placeholder = GlobalServer {
            net: GlobalNet::new(1, &[], &global_stream(&root)),
            train_ids: Vec::new(),
            train_labels: Vec::new(),
            test_ids: Vec::new(),
            test_labels: Vec::new(),
            clock: 0,
        };
        let mut session = Session {
            config,
            root,
            global: placeholder,
            labels,
            links,
            company_links,
            companies: nodes,
            handles,
            state: RoundState {
                round: 0,
                phase: Phase::Done,
                received: BTreeSet::new(),
            },
            updates: Vec::new(),
            epoch: 0,
        };
        session.deliver_uploads()?;
        session.receive_alignment()?;
        Ok(session)
    }

    fn deliver_uploads(&mut self) -> Result<()> {
        let mut k = 0;
        for links in self.company_links.iter_mut() {
            for link in links.iter_mut() {
                let node = &self.companies[k];
                k += 1;
                for split in [Split::Train, Split::Test] {
                    link.send(&node.upload(split)?)?;
                }
            }
        }
        Ok(())
    }

    fn receive_alignment(&mut self) -> Result<()> {
        let m = self.links.len();
        let mut per_split: Vec<Vec<Vec<u64>>> = vec![Vec::with_capacity(m), Vec::with_capacity(m)];
        for i in 0..m {
            for (s, split) in [Split::Train, Split::Test].into_iter().enumerate() {
                let ids = self.expect_ids(i, split, "setup")?;
                per_split[s].push(ids);
            }
        }
        for ids in &per_split {
            let refs: Vec<&[u64]> = ids.iter().map(Vec::as_slice).collect();
            check_same_ids(&refs)?;
        }
        let train_ids = per_split[0].swap_remove(0);
        let test_ids = per_split[1].swap_remove(0);
        if train_ids.is_empty() {
            return Err(Error::Data("no aligned training customers".into()));
        }
        let train_labels = self.labels_for(&train_ids)?;
        let test_labels = self.labels_for(&test_ids)?;
        let arch = &self.config.training.architecture;
        let input = arch.embedding_dim * m;
        self.global = GlobalServer {
            net: GlobalNet::new(input, &arch.global_hidden, &global_stream(&self.root)),
            train_ids,
            train_labels,
            test_ids,
            test_labels,
            clock: 0,
        };
        Ok(())
    }

    fn labels_for(&self, ids: &[u64]) -> Result<Vec<u8>> {
        ids.iter()
            .map(|id| {
                self.labels
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("global server has no label for customer {id}")))
            })
            .collect()
    }

    fn recv_from(&mut self, i: usize, phase: &str) -> Result<Message> {
        match self.links[i].recv() {
            Ok(Message::Fault { reason, .. }) => Err(Error::Protocol(format!("industry server {i} failed: {reason}"))),
            Ok(msg) => Ok(msg),
            Err(Error::Transport(TransportError::TimedOut)) => Err(Error::Timeout {
                phase: phase.to_string(),
                party: format!("industry server {i}"),
            }),
            Err(e) => Err(e),
        }
    }

    fn expect_ids(&mut self, i: usize, split: Split, phase: &str) -> Result<Vec<u64>> {
        match self.recv_from(i, phase)? {
            Message::AlignedIds {
                industry,
                split: got,
                ids,
            } if industry as usize == i && got == split => Ok(ids),
            other => Err(Error::Protocol(format!(
                "expected {split:?} AlignedIds from industry {i}, got {}",
                other.kind()
            ))),
        }
    }

    fn expect_embedding(&mut self, i: usize, round: u32, rows: usize, phase: &str) -> Result<Matrix> {
        let dim = self.config.training.architecture.embedding_dim;
        match self.recv_from(i, phase)? {
            Message::EmbeddingUp { industry, round: r, z } if industry as usize == i && r == round => {
                if z.shape() != (rows, dim) {
                    return Err(Error::Protocol(format!(
                        "industry {i} sent a {:?} embedding, expected ({rows}, {dim})",
                        z.shape()
                    )));
                }
                Ok(z)
            }
            other => Err(Error::Protocol(format!(
                "expected EmbeddingUp for round {round} from industry {i}, got {} for round {}",
                other.kind(),
                other.round()
            ))),
        }
    }

    pub fn industries(&self) -> usize {
        self.links.len()
    }

    pub fn round(&self) -> u32 {
        self.state.round
    }

    pub fn round_state(&self) -> &RoundState {
        &self.state
    }

    pub fn global(&self) -> &GlobalServer {
        &self.global
    }

    pub fn companies(&self) -> &[CompanyNode] {
        &self.companies
    }

    pub fn updates(&self) -> &[UpdateEvent] {
        &self.updates
    }

    /// One synchronous round over the given aligned training positions
    /// (empty means full batch).
    pub fn run_round(&mut self, rows: &[usize]) -> Result<MetricsReport> {
        let round = self.state.round + 1;
        self.state = RoundState {
            round,
            phase: Phase::CollectEmbeddings,
            received: BTreeSet::new(),
        };
        let labels: Vec<u8> = if rows.is_empty() {
            self.global.train_labels.clone()
        } else {
            let n = self.global.train_labels.len();
            rows.iter()
                .map(|&r| {
                    self.global
                        .train_labels
                        .get(r)
                        .copied()
                        .ok_or_else(|| Error::Config(format!("batch row {r} outside {n} training rows")))
                })
                .collect::<Result<_>>()?
        };
        let wire_rows: Vec<u64> = rows.iter().map(|&r| r as u64).collect();
        for link in self.links.iter_mut() {
            link.send(&Message::RoundStart {
                round,
                rows: wire_rows.clone(),
            })?;
        }

        let m = self.links.len();
        let mut embeddings = Vec::with_capacity(m);
        for i in 0..m {
            embeddings.push(self.expect_embedding(i, round, labels.len(), Phase::CollectEmbeddings.name())?);
            self.state.received.insert(i);
        }

        self.state.enter(Phase::GlobalUpdate);
        // Gradients for the encoders come from the weights before this step.
        let pass = global_pass(&self.global.net, &embeddings, &labels)?;
        sgd_step(&mut self.global.net, &pass.grads, self.config.training.learning_rate)?;
        self.global.clock += 1;
        self.updates.push(UpdateEvent {
            round,
            party: Updater::Global,
            clock: self.global.clock,
        });

        self.state.enter(Phase::ScatterGradients);
        for (i, (link, grad)) in self.links.iter_mut().zip(pass.d_embeddings).enumerate() {
            link.send(&Message::GradientDown {
                industry: i as u32,
                round,
                clock: self.global.clock,
                grad,
            })?;
            self.state.received.insert(i);
        }

        self.state.enter(Phase::EncoderUpdate);
        let mut kl_total = 0.0;
        for i in 0..m {
            match self.recv_from(i, Phase::EncoderUpdate.name())? {
                Message::EncoderReport {
                    industry,
                    round: r,
                    clock,
                    kl,
                } if industry as usize == i && r == round => {
                    kl_total += kl;
                    self.global.clock = self.global.clock.max(clock);
                    self.updates.push(UpdateEvent {
                        round,
                        party: Updater::Industry(i),
                        clock,
                    });
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "expected EncoderReport for round {round} from industry {i}, got {}",
                        other.kind()
                    )))
                }
            }
            self.state.received.insert(i);
        }
        self.state.enter(Phase::Done);
        Ok(MetricsReport {
            round,
            loss: pass.loss + kl_total,
            accuracy: accuracy(&pass.predictions, &labels),
        })
    }

    /// One pass over the training rows: a single full-batch round, or shuffled
    /// mini-batches when a batch size is configured. Returns the row-weighted
    /// mean loss and accuracy.
    pub fn run_epoch(&mut self) -> Result<MetricsReport> {
        self.epoch += 1;
        let n = self.global.train_labels.len();
        let batches: Vec<Vec<usize>> = match self.config.training.batch_size {
            Some(0) => return Err(Error::Config("batch size must be positive".into())),
            Some(b) if b < n => {
                let perm = self
                    .root
                    .child(format!("global/batches/epoch:{}", self.epoch))
                    .permutation(n);
                perm.chunks(b).map(<[usize]>::to_vec).collect()
            }
            _ => vec![Vec::new()],
        };
        let (mut loss, mut acc) = (0.0, 0.0);
        let mut last = None;
        for rows in &batches {
            let report = self.run_round(rows)?;
            let w = if rows.is_empty() { n } else { rows.len() } as f64 / n as f64;
            loss += w * report.loss;
            acc += w * report.accuracy;
            last = Some(report.round);
        }
        Ok(MetricsReport {
            round: last.expect("at least one batch"),
            loss,
            accuracy: acc,
        })
    }

    fn eval_embeddings(&mut self, split: Split, rows: usize) -> Result<Matrix> {
        let round = self.state.round;
        for link in self.links.iter_mut() {
            link.send(&Message::EvalRequest { round, split })?;
        }
        let mut parts = Vec::with_capacity(self.links.len());
        for i in 0..self.links.len() {
            parts.push(self.expect_embedding(i, round, rows, "evaluate")?);
        }
        let refs: Vec<&Matrix> = parts.iter().collect();
        Matrix::hstack(&refs)
    }

    /// Eval-mode (ε = 0) predictions on the uploaded train or test rows.
    pub fn evaluate(&mut self, split: Split) -> Result<Evaluation> {
        let (ids, labels) = match split {
            Split::Train => (self.global.train_ids.clone(), self.global.train_labels.clone()),
            Split::Test => (self.global.test_ids.clone(), self.global.test_labels.clone()),
            Split::Query => return Err(Error::State("use predict for unseen rows".into())),
        };
        if ids.is_empty() {
            return Ok(Evaluation {
                customer_ids: ids,
                labels,
                probabilities: Vec::new(),
                loss: 0.0,
                accuracy: 0.0,
            });
        }
        let joined = self.eval_embeddings(split, ids.len())?;
        let (pred, _) = self.global.net.forward(&joined)?;
        let (loss, _) = bce_loss(&pred, &labels)?;
        Ok(Evaluation {
            accuracy: accuracy(&pred, &labels),
            customer_ids: ids,
            labels,
            probabilities: pred.into_vec(),
            loss,
        })
    }

    /// Probabilities for new rows. `views` must hold one view per company (any
    /// order); the companies transform them with their fitted stages.
    pub fn predict(&mut self, views: &[CompanyView]) -> Result<(Vec<u64>, Vec<f64>)> {
        let mut k = 0;
        for (i, links) in self.company_links.iter_mut().enumerate() {
            for (j, link) in links.iter_mut().enumerate() {
                let node = &self.companies[k];
                k += 1;
                let view = views
                    .iter()
                    .find(|v| v.industry == i && v.company == j)
                    .ok_or_else(|| Error::Data(format!("no query rows for company {j} of industry {i}")))?;
                link.send(&node.query_upload(view)?)?;
            }
        }
        let round = self.state.round;
        for link in self.links.iter_mut() {
            link.send(&Message::EvalRequest {
                round,
                split: Split::Query,
            })?;
        }
        let mut lists = Vec::with_capacity(self.links.len());
        let mut parts = Vec::with_capacity(self.links.len());
        for i in 0..self.links.len() {
            let ids = self.expect_ids(i, Split::Query, "predict")?;
            parts.push(self.expect_embedding(i, round, ids.len(), "predict")?);
            lists.push(ids);
        }
        let refs: Vec<&[u64]> = lists.iter().map(Vec::as_slice).collect();
        check_same_ids(&refs)?;
        let refs: Vec<&Matrix> = parts.iter().collect();
        let (pred, _) = self.global.net.forward(&Matrix::hstack(&refs)?)?;
        Ok((lists.swap_remove(0), pred.into_vec()))
    }

    fn stop_all(&mut self) -> Vec<Result<IndustryServer>> {
        // Closing the company links unblocks a server still waiting on uploads.
        self.company_links.clear();
        let round = self.state.round;
        for link in self.links.iter_mut() {
            let _ = link.send(&Message::Shutdown { round });
        }
        self.handles
            .drain(..)
            .enumerate()
            .map(|(i, h)| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::State(format!("industry server {i} panicked"))))
            })
            .collect()
    }

    /// Stops every industry server and returns all final party states.
    pub fn shutdown(mut self) -> Result<PartyStates> {
        let industries = self.stop_all().into_iter().collect::<Result<Vec<_>>>()?;
        Ok(PartyStates {
            global: self.global.clone(),
            industries,
            companies: std::mem::take(&mut self.companies),
            updates: std::mem::take(&mut self.updates),
        })
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if !self.handles.is_empty() {
            self.stop_all();
        }
    }
}
