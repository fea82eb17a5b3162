use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::TransportKind;
use crate::nets::Architecture;
use crate::par::Execution;
use crate::transform::DEFAULT_MAX_PCA;

/// Environment variable naming the directory that holds bundled datasets.
pub const DATA_DIR_ENV: &str = "MICSFED_DATA_DIR";
/// File name of the bundled wine-quality table.
pub const DEFAULT_DATASET: &str = "winequality-red.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full multi-industry, multi-company collaboration.
    Mics,
    /// Each company trains alone on its own rows and features.
    Solo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mics => "mics",
            Mode::Solo => "solo",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mics" => Ok(Mode::Mics),
            "solo" => Ok(Mode::Solo),
            other => Err(Error::Config(format!("unknown mode `{other}` (mics|solo)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One experiment: a dataset, a collaboration layout, and the training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub mode: Mode,
    pub industries: usize,
    pub companies: usize,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub k_pca: usize,
    pub embedding_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub global_hidden: Vec<usize>,
    pub beta: f64,
    pub train_fraction: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub transport: TransportKind,
    pub output: Option<PathBuf>,
    /// Record real wall-clock time; off by default so output files are reproducible.
    pub timing: bool,
    #[serde(skip, default)]
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            dataset: default_dataset(),
            mode: Mode::Mics,
            industries: 1,
            companies: 1,
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 200,
            learning_rate: 0.05,
            k_pca: DEFAULT_MAX_PCA,
            embedding_dim: arch.embedding_dim,
            encoder_hidden: arch.encoder_hidden,
            global_hidden: arch.global_hidden,
            beta: 1e-3,
            train_fraction: 0.8,
            batch_size: None,
            transport: TransportKind::Inproc,
            output: None,
            timing: false,
            execution: Execution::default(),
        }
    }
}

/// `$MICSFED_DATA_DIR/winequality-red.csv`, falling back to the repository's `data/` directory.
pub fn default_dataset() -> PathBuf {
    let dir = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    dir.join(DEFAULT_DATASET)
}

impl ExperimentConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoder_hidden: self.encoder_hidden.clone(),
            embedding_dim: self.embedding_dim,
            global_hidden: self.global_hidden.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.industries == 0 || self.companies == 0 {
            return Err(Error::Config(format!(
                "industries and companies must be at least 1 (got {} and {})",
                self.industries, self.companies
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} is invalid",
                self.learning_rate
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::Config(format!("beta {} is invalid", self.beta)));
        }
        if self.k_pca == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("k_pca and embedding_dim must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Keys match the long CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
        }
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "mode" => self.mode = value.parse()?,
            "industries" => self.industries = num(key, value)?,
            "companies" => self.companies = num(key, value)?,
            "seed" | "seeds" => self.seeds = list(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.learning_rate = num(key, value)?,
            "k-pca" => self.k_pca = num(key, value)?,
            "embed-dim" => self.embedding_dim = num(key, value)?,
            "encoder-hidden" => self.encoder_hidden = list(key, value)?,
            "global-hidden" => self.global_hidden = list(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "train-frac" => self.train_fraction = num(key, value)?,
            "batch-size" => {
                self.batch_size = match value {
                    "full" | "0" => None,
                    v => Some(num(key, v)?),
                }
            }
            "transport" => self.transport = value.parse()?,
            "out" => self.output = Some(PathBuf::from(value)),
            "timing" => self.timing = num(key, value)?,
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies every setting of a flat config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (key, value) in parse_config_text(&text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped,
/// and later keys win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
