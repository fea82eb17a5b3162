#![allow(dead_code)]

use std::path::PathBuf;

use micsfed::dataio::Dataset;
use micsfed::expcli::{prepare_seed, ExperimentConfig, SeedData};
use micsfed::federation::{SessionConfig, SessionData, TrainingConfig, TransportKind};
use micsfed::nets::Architecture;
use micsfed::numkernel::RngStream;
use micsfed::par::Execution;
use micsfed::transform::PipelineConfig;

pub fn wine_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/winequality-red.csv")
}

pub fn wine() -> Dataset {
    Dataset::from_csv(wine_path()).expect("bundled wine csv loads")
}

/// First `rows` rows of the wine table, enough for quick protocol tests.
pub fn small_wine(rows: usize) -> Dataset {
    let ds = wine();
    let idx: Vec<usize> = (0..rows.min(ds.len())).collect();
    ds.subset(&idx)
}

pub fn seed_data(ds: &Dataset, m: usize, n: usize, seed: u64) -> SeedData {
    prepare_seed(ds, m, n, 0.8, &RngStream::new(seed)).expect("seed data")
}

pub fn session_data(sd: &SeedData, m: usize, n: usize) -> SessionData {
    SessionData {
        companies_per_industry: vec![n; m],
        companies: sd.companies.clone(),
        labels: sd.labels(),
    }
}

pub fn small_training(embedding_dim: usize) -> TrainingConfig {
    TrainingConfig {
        architecture: Architecture {
            encoder_hidden: vec![6],
            embedding_dim,
            global_hidden: vec![5],
        },
        ..TrainingConfig::default()
    }
}

pub fn session_config(seed: u64, training: TrainingConfig, transport: TransportKind) -> SessionConfig {
    SessionConfig {
        training,
        pipeline: PipelineConfig::mics(8),
        transport,
        execution: Execution::default(),
        rng: RngStream::new(seed),
    }
}

pub fn experiment(mode: &str, m: usize, n: usize, seeds: &[u64], epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: wine_path(),
        industries: m,
        companies: n,
        seeds: seeds.to_vec(),
        epochs,
        ..ExperimentConfig::default()
    };
    cfg.set("mode", mode).expect("mode");
    cfg
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Single-process composition of the same encoders and classifier, using the
/// same noise paths as the federated run. Full-batch only.
pub struct Reference {
    pub encoders: Vec<micsfed::nets::VariationalEncoder>,
    pub net: micsfed::nets::GlobalNet,
    pub features: Vec<micsfed::numkernel::Matrix>,
    pub labels: Vec<u8>,
    pub root: RngStream,
    pub learning_rate: f64,
    pub beta: f64,
}

impl Reference {
    /// Initial state read back from a session shut down before its first round.
    pub fn from_untrained(data: SessionData, config: SessionConfig) -> Self {
        let root = config.rng.clone();
        let (lr, beta) = (config.training.learning_rate, config.training.beta);
        let states = micsfed::federation::Session::setup(data, config)
            .expect("setup")
            .shutdown()
            .expect("shutdown");
        Reference {
            encoders: states.industries.iter().map(|s| s.encoder.clone()).collect(),
            net: states.global.net.clone(),
            features: states.industries.iter().map(|s| s.train.features.clone()).collect(),
            labels: states.global.train_labels.clone(),
            root,
            learning_rate: lr,
            beta,
        }
    }

    /// One full-batch step; returns BCE + Σ KL.
    pub fn step(&mut self, round: u32) -> f64 {
        use micsfed::nets::{bce_loss, sgd_step, Noise};
        use micsfed::numkernel::Matrix;
        let outs: Vec<_> = self
            .encoders
            .iter()
            .zip(&self.features)
            .enumerate()
            .map(|(i, (enc, x))| {
                let eps = self.root.child(format!("industry:{i}/eps/round:{round}"));
                enc.forward(x, Noise::Draw(&eps)).unwrap()
            })
            .collect();
        let zs: Vec<&Matrix> = outs.iter().map(|o| &o.z).collect();
        let joined = Matrix::hstack(&zs).unwrap();
        let (pred, cache) = self.net.forward(&joined).unwrap();
        let (bce, d_pred) = bce_loss(&pred, &self.labels).unwrap();
        let (net_grads, d_joined) = self.net.backward(&cache, &d_pred).unwrap();
        sgd_step(&mut self.net, &net_grads, self.learning_rate).unwrap();
        let mut loss = bce;
        let mut col = 0;
        for (enc, out) in self.encoders.iter_mut().zip(&outs) {
            let w = out.z.cols();
            let d_z = d_joined.col_range(col, col + w);
            col += w;
            let (grads, kl) = enc.backward_with_kl(out, &d_z, self.beta).unwrap();
            sgd_step(enc, &grads.into_layers(), self.learning_rate).unwrap();
            loss += kl;
        }
        loss
    }

    /// Eval-mode probabilities for already transformed industry inputs.
    pub fn predict(&self, inputs: &[micsfed::numkernel::Matrix]) -> Vec<f64> {
        use micsfed::nets::Noise;
        use micsfed::numkernel::Matrix;
        let zs: Vec<Matrix> = self
            .encoders
            .iter()
            .zip(inputs)
            .map(|(e, x)| e.forward(x, Noise::Zero).unwrap().z)
            .collect();
        let refs: Vec<&Matrix> = zs.iter().collect();
        self.net.forward(&Matrix::hstack(&refs).unwrap()).unwrap().0.into_vec()
    }
}

/// Average usable feature points over every assignment of customers to
/// companies, counted cell by cell.
pub fn brute_force_value(
    scenario: micsfed::expcli::Scenario,
    m_ind: usize,
    n: usize,
    k: usize,
    customers: usize,
) -> num_rational::BigRational {
    let digits = m_ind * customers;
    let total = n.pow(digits as u32);
    use micsfed::expcli::Scenario;
    use num_bigint::BigInt;
    let mut points = BigInt::from(0);
    for code in 0..total {
        // Digit (i, c) is the company of industry i holding customer c.
        let company = |i: usize, c: usize| (code / n.pow((i * customers + c) as u32)) % n;
        let count: usize = (0..customers)
            .map(|c| match scenario {
                Scenario::Mics => m_ind * k,
                Scenario::WithinIndustry => k,
                Scenario::OneCompanyCrossIndustry => {
                    if company(0, c) == 0 {
                        m_ind * k
                    } else {
                        0
                    }
                }
                Scenario::Coalition => {
                    if (0..m_ind).all(|i| company(i, c) == 0) {
                        m_ind * k
                    } else {
                        0
                    }
                }
                Scenario::None => {
                    if company(0, c) == 0 {
                        k
                    } else {
                        0
                    }
                }
            })
            .sum();
        points += BigInt::from(count);
    }
    num_rational::BigRational::new(points, BigInt::from(total))
}
