use crate::dataio::Dataset;
use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Mode};
use super::records::{sort_records, MetricsRecord};
use super::scenario::run_seed;

/// Which grid of (M, N) cells to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// M = 1..=5 with N = 1.
    Industries,
    /// M = 1 with N = 1..=5.
    Companies,
    /// M = 1..=5 × N = 1..=5.
    Grid,
}

pub const SWEEP_MAX: usize = 5;

impl SweepKind {
    pub fn cells(self) -> Vec<(usize, usize)> {
        let r = 1..=SWEEP_MAX;
        match self {
            SweepKind::Industries => r.map(|m| (m, 1)).collect(),
            SweepKind::Companies => r.map(|n| (1, n)).collect(),
            SweepKind::Grid => r.flat_map(|m| (1..=SWEEP_MAX).map(move |n| (m, n))).collect(),
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "industries" => Ok(SweepKind::Industries),
            "companies" => Ok(SweepKind::Companies),
            "grid" => Ok(SweepKind::Grid),
            other => Err(Error::Config(format!(
                "unknown sweep kind `{other}` (industries|companies|grid)"
            ))),
        }
    }
}

/// Runs both modes over every cell of `kind` for every seed of `template`
/// and keeps each run's final epoch. Every (cell, mode, seed) is an
/// independent job scheduled by `template.execution`.
pub fn sweep(kind: SweepKind, template: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    template.validate()?;
    let dataset = Dataset::from_csv(&template.dataset)?;
    sweep_on(&dataset, kind, template)
}

/// As [`sweep`] on an already loaded dataset.
pub fn sweep_on(dataset: &Dataset, kind: SweepKind, template: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    template.validate()?;
    let mut jobs = Vec::new();
    for (m, n) in kind.cells() {
        for mode in [Mode::Mics, Mode::Solo] {
            for &seed in &template.seeds {
                jobs.push((m, n, mode, seed));
            }
        }
    }
    let expected = jobs.len();
    let mut records = template.execution.try_map(jobs, |(m, n, mode, seed)| {
        let config = ExperimentConfig {
            industries: m,
            companies: n,
            mode,
            ..template.clone()
        };
        let run = run_seed(dataset, &config, seed)?;
        run.records
            .last()
            .copied()
            .ok_or_else(|| Error::State(format!("{mode} M={m} N={n} seed={seed} produced no records")))
    })?;
    debug_assert_eq!(records.len(), expected);
    sort_records(&mut records);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_counts() {
        assert_eq!(SweepKind::Industries.cells().len(), 5);
        assert_eq!(SweepKind::Companies.cells().len(), 5);
        assert_eq!(SweepKind::Grid.cells().len(), 25);
        assert!(SweepKind::Companies.cells().iter().all(|&(m, _)| m == 1));
        assert!("diagonal".parse::<SweepKind>().is_err());
    }
}
