use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{block_sizes, CompanyView, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::federation::{Session, SessionConfig, SessionData, Split, TrainingConfig};
use crate::nets::ParamSnapshot;
use crate::numkernel::RngStream;
use crate::transform::{CompanyTransform, PipelineConfig, ProjectionModel, StandardizeModel};

use super::config::{ExperimentConfig, Mode};
use super::records::MetricsRecord;

/// Stratified train/test row indices: each class is shuffled on its own path
/// and `round(fraction · class size)` rows go to training. Both lists ascend.
pub fn stratified_split(labels: &[u8], train_fraction: f64, stream: &RngStream) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let perm = stream.child(format!("class:{class}")).permutation(members.len());
        let mut n_train = (train_fraction * members.len() as f64).round() as usize;
        if members.len() >= 2 {
            n_train = n_train.clamp(1, members.len() - 1);
        }
        for (rank, &p) in perm.iter().enumerate() {
            if rank < n_train {
                train.push(members[p]);
            } else {
                test.push(members[p]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Per-seed inputs shared by both modes: the split and every simulated company.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub train: Dataset,
    pub test: Dataset,
    /// `(train, test)` views in `(industry, company)` order.
    pub companies: Vec<(CompanyView, CompanyView)>,
}

impl SeedData {
    pub fn labels(&self) -> HashMap<u64, u8> {
        let mut all = self.train.label_of();
        all.extend(self.test.label_of());
        all
    }
}

/// Splits the rows, then simulates `m × n` companies: vertical feature blocks
/// per industry, contiguous id blocks per company, and a company-specific
/// square Gaussian projection so each company holds its own representation of
/// its rows.
pub fn prepare_seed(dataset: &Dataset, m: usize, n: usize, train_fraction: f64, root: &RngStream) -> Result<SeedData> {
    let (tr, te) = stratified_split(dataset.labels(), train_fraction, &root.child("split"));
    let train = dataset.subset(&tr);
    let test = dataset.subset(&te);
    simulate_companies(train, test, m, n, root)
}

/// Company simulation over an existing split.
pub fn simulate_companies(train: Dataset, test: Dataset, m: usize, n: usize, root: &RngStream) -> Result<SeedData> {
    let sizes = block_sizes(train.len(), n).into_iter().zip(block_sizes(test.len(), n));
    if let Some((j, (tr, te))) = sizes
        .enumerate()
        .find(|(_, (tr, te))| *tr < MIN_CELL_TRAIN_ROWS || *te == 0)
    {
        return Err(Error::Data(format!(
            "cell (industry 0, company {j}) would hold {tr} training and {te} test rows; too small to train and test"
        )));
    }
    // Bring raw columns to a common scale first; wine features differ by orders of magnitude.
    let scale = StandardizeModel::fit(train.features())?;
    let train_std = train.with_features(scale.apply(train.features())?, train.feature_names().to_vec())?;
    let test_std = test.with_features(scale.apply(test.features())?, test.feature_names().to_vec())?;
    let train_views = PartitionPlan::uniform(&train_std, m, n)?.company_views(&train_std);
    let test_views = PartitionPlan::uniform(&test_std, m, n)?.company_views(&test_std);
    let companies = train_views
        .into_iter()
        .zip(test_views)
        .map(|(mut tr, mut te)| {
            let w = tr.features.cols();
            let stream = root.child(format!("industry:{}/company:{}/simulation", tr.industry, tr.company));
            let proj = ProjectionModel::generate(&stream, w, w)?;
            tr.features = proj.apply(&tr.features)?;
            te.features = proj.apply(&te.features)?;
            Ok((tr, te))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedData { train, test, companies })
}

/// Per-epoch observables of one trained session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time: f64,
}

/// What one trained session leaves behind.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub industry: usize,
    pub company: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub epochs: Vec<EpochMetrics>,
    pub transforms: Vec<CompanyTransform>,
    /// Encoders in industry order, then the global network.
    pub snapshots: Vec<ParamSnapshot>,
    /// Final eval-mode test probabilities with their labels.
    pub test_probabilities: Vec<f64>,
    pub test_labels: Vec<u8>,
}

fn training(config: &ExperimentConfig) -> TrainingConfig {
    TrainingConfig {
        architecture: config.architecture(),
        learning_rate: config.learning_rate,
        beta: config.beta,
        batch_size: config.batch_size,
    }
}

/// Sets up a session, trains for `epochs`, evaluates after every epoch.
pub fn train_session(
    data: SessionData,
    session_config: SessionConfig,
    epochs: usize,
    timing: bool,
) -> Result<TrainedCell> {
    let start = Instant::now();
    let mut session = Session::setup(data, session_config)?;
    let mut history = Vec::with_capacity(epochs);
    let mut last_test = None;
    for epoch in 1..=epochs {
        let report = session.run_epoch()?;
        let train = session.evaluate(Split::Train)?;
        let test = session.evaluate(Split::Test)?;
        history.push(EpochMetrics {
            epoch,
            train_loss: report.loss,
            train_accuracy: train.accuracy,
            test_accuracy: test.accuracy,
            wall_time: if timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        last_test = Some(test);
    }
    let test = last_test.expect("epochs >= 1");
    let states = session.shutdown()?;
    let mut snapshots: Vec<ParamSnapshot> = states
        .industries
        .iter()
        .map(|s| ParamSnapshot::of(&s.encoder))
        .collect();
    snapshots.push(ParamSnapshot::of(&states.global.net));
    Ok(TrainedCell {
        industry: 0,
        company: 0,
        train_rows: states.global.train_ids.len(),
        test_rows: states.global.test_ids.len(),
        epochs: history,
        transforms: states.companies.iter().filter_map(|c| c.transform().cloned()).collect(),
        snapshots,
        test_probabilities: test.probabilities,
        test_labels: test.labels,
    })
}

/// The full collaboration for one seed.
pub fn run_mics(seed_data: &SeedData, config: &ExperimentConfig, root: &RngStream) -> Result<TrainedCell> {
    let data = SessionData {
        companies_per_industry: vec![config.companies; config.industries],
        companies: seed_data.companies.clone(),
        labels: seed_data.labels(),
    };
    let session_config = SessionConfig {
        training: training(config),
        pipeline: PipelineConfig::mics(config.k_pca),
        transport: config.transport,
        execution: config.execution,
        rng: root.clone(),
    };
    train_session(data, session_config, config.epochs, config.timing)
}

/// Smallest cell the isolated baseline can train and test on.
pub const MIN_CELL_TRAIN_ROWS: usize = 2;

/// Every company trained alone on its own rows and features.
pub fn run_solo_cells(seed_data: &SeedData, config: &ExperimentConfig, root: &RngStream) -> Result<Vec<TrainedCell>> {
    let labels = seed_data.labels();
    let jobs: Vec<(CompanyView, CompanyView)> = seed_data.companies.clone();
    config.execution.try_map(jobs, |(train, test)| {
        let (i, j) = (train.industry, train.company);
        if train.len() < MIN_CELL_TRAIN_ROWS || test.is_empty() {
            return Err(Error::Data(format!(
                "cell (industry {i}, company {j}) has {} training and {} test rows; too small to train and test",
                train.len(),
                test.len()
            )));
        }
        let relabel = |v: &CompanyView| CompanyView {
            industry: 0,
            company: 0,
            ..v.clone()
        };
        let cell_labels = train
            .customer_ids
            .iter()
            .chain(&test.customer_ids)
            .map(|id| (*id, labels[id]))
            .collect();
        let data = SessionData {
            companies_per_industry: vec![1],
            companies: vec![(relabel(&train), relabel(&test))],
            labels: cell_labels,
        };
        let session_config = SessionConfig {
            training: training(config),
            pipeline: PipelineConfig::standardize_only(),
            transport: config.transport,
            execution: config.execution,
            rng: root.child(format!("solo/industry:{i}/company:{j}")),
        };
        let mut cell = train_session(data, session_config, config.epochs, config.timing)?;
        cell.industry = i;
        cell.company = j;
        Ok(cell)
    })
}

/// Row-weighted mean over cells: train rows weight loss and train accuracy,
/// test rows weight test accuracy.
pub fn aggregate_cells(cells: &[TrainedCell]) -> Vec<EpochMetrics> {
    let Some(first) = cells.first() else {
        return Vec::new();
    };
    let train_total: usize = cells.iter().map(|c| c.train_rows).sum();
    let test_total: usize = cells.iter().map(|c| c.test_rows).sum();
    (0..first.epochs.len())
        .map(|e| {
            let mut m = EpochMetrics {
                epoch: first.epochs[e].epoch,
                train_loss: 0.0,
                train_accuracy: 0.0,
                test_accuracy: 0.0,
                wall_time: 0.0,
            };
            for c in cells {
                let wt = c.train_rows as f64 / train_total as f64;
                let ws = c.test_rows as f64 / test_total as f64;
                let x = &c.epochs[e];
                m.train_loss += wt * x.train_loss;
                m.train_accuracy += wt * x.train_accuracy;
                m.test_accuracy += ws * x.test_accuracy;
                m.wall_time = m.wall_time.max(x.wall_time);
            }
            m
        })
        .collect()
}

/// Everything produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub cells: Vec<TrainedCell>,
}

/// Reproducibility record of one seed: its metrics and every fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub final_test_accuracy: f64,
    pub transforms: Vec<CompanyTransform>,
    pub snapshots: Vec<ParamSnapshot>,
}

impl SeedRun {
    pub fn record(&self) -> SeedRecord {
        SeedRecord {
            seed: self.seed,
            final_test_accuracy: self.records.last().map_or(0.0, |r| r.test_accuracy),
            transforms: self.cells.iter().flat_map(|c| c.transforms.clone()).collect(),
            snapshots: self.cells.iter().flat_map(|c| c.snapshots.clone()).collect(),
        }
    }
}

/// Trains one seed of `config` on an already loaded dataset.
pub fn run_seed(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let root = RngStream::new(seed);
    let seed_data = prepare_seed(
        dataset,
        config.industries,
        config.companies,
        config.train_fraction,
        &root,
    )
    .map_err(|e| with_context(e, config, seed))?;
    let (cells, history) = match config.mode {
        Mode::Mics => {
            let cell = run_mics(&seed_data, config, &root).map_err(|e| with_context(e, config, seed))?;
            let history = cell.epochs.clone();
            (vec![cell], history)
        }
        Mode::Solo => {
            let cells = run_solo_cells(&seed_data, config, &root).map_err(|e| with_context(e, config, seed))?;
            let history = aggregate_cells(&cells);
            (cells, history)
        }
    };
    let records = history
        .iter()
        .map(|h| MetricsRecord {
            mode: config.mode,
            industries: config.industries,
            companies: config.companies,
            seed,
            epoch: h.epoch,
            train_loss: h.train_loss,
            train_accuracy: h.train_accuracy,
            test_accuracy: h.test_accuracy,
            wall_time: h.wall_time,
        })
        .collect();
    Ok(SeedRun { seed, records, cells })
}

fn with_context(e: Error, config: &ExperimentConfig, seed: u64) -> Error {
    let ctx = format!(
        "{} M={} N={} seed={}",
        config.mode, config.industries, config.companies, seed
    );
    match e {
        Error::Data(s) => Error::Data(format!("{ctx}: {s}")),
        Error::Protocol(s) => Error::Protocol(format!("{ctx}: {s}")),
        Error::State(s) => Error::State(format!("{ctx}: {s}")),
        Error::Config(s) => Error::Config(format!("{ctx}: {s}")),
        other => other,
    }
}

/// Loads the dataset and trains every seed; records come back sorted.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    Ok(run_experiment_detailed(config)?
        .into_iter()
        .flat_map(|r| r.records)
        .collect())
}

/// As [`run_experiment`], keeping every seed's fitted models.
pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    let dataset = Dataset::from_csv(&config.dataset)?;
    run_on_dataset(&dataset, config)
}

pub fn run_on_dataset(dataset: &Dataset, config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    let mut runs = config
        .execution
        .try_map(config.seeds.clone(), |seed| run_seed(dataset, config, seed))?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

/// The no-collaboration baseline of `config`: every company alone.
pub fn baseline_no_collaboration(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    run_experiment(&ExperimentConfig {
        mode: Mode::Solo,
        ..config.clone()
    })
}
