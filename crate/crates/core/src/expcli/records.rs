use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::Mode;

pub const CSV_HEADER: [&str; 9] = [
    "mode",
    "M",
    "N",
    "seed",
    "epoch",
    "train_loss",
    "train_acc",
    "test_acc",
    "wall_time_s",
];

/// One epoch of one seed of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub industries: usize,
    pub companies: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time: f64,
}

impl MetricsRecord {
    fn key(&self) -> (Mode, usize, usize, u64, usize) {
        (self.mode, self.industries, self.companies, self.seed, self.epoch)
    }
}

/// Orders by (mode, M, N, seed, epoch).
pub fn sort_records(records: &mut [MetricsRecord]) {
    records.sort_by_key(MetricsRecord::key);
}

/// Renders `records` as CSV text with six decimals on every real column.
pub fn render_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &sorted {
        w.write_record([
            r.mode.as_str().to_string(),
            r.industries.to_string(),
            r.companies.to_string(),
            r.seed.to_string(),
            r.epoch.to_string(),
            format!("{:.6}", r.train_loss),
            format!("{:.6}", r.train_accuracy),
            format!("{:.6}", r.test_accuracy),
            format!("{:.6}", r.wall_time),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::State(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Writes the metrics CSV to `path`.
pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Data("no metrics records to write".into()));
    }
    std::fs::write(path, render_csv(records)?).map_err(|e| Error::io(path, e))
}

/// Parses CSV text produced by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(format!("metrics csv header: {e}")))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Data(format!("unexpected metrics header {header:?}")));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("metrics row {}: {e}", n + 1)))?;
        let field = |i: usize| row.get(i).unwrap_or("");
        fn parse<T: std::str::FromStr>(s: &str, row: usize, col: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Data(format!("metrics row {row}, column {col}: cannot parse `{s}`")))
        }
        let r = n + 1;
        out.push(MetricsRecord {
            mode: field(0).parse()?,
            industries: parse(field(1), r, "M")?,
            companies: parse(field(2), r, "N")?,
            seed: parse(field(3), r, "seed")?,
            epoch: parse(field(4), r, "epoch")?,
            train_loss: parse(field(5), r, "train_loss")?,
            train_accuracy: parse(field(6), r, "train_acc")?,
            test_accuracy: parse(field(7), r, "test_acc")?,
            wall_time: parse(field(8), r, "wall_time_s")?,
        });
    }
    Ok(out)
}

/// Last-epoch record of each (mode, M, N, seed).
pub fn final_epochs(records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out: Vec<MetricsRecord> = Vec::new();
    for r in sorted {
        match out.last_mut() {
            Some(last)
                if (last.mode, last.industries, last.companies, last.seed)
                    == (r.mode, r.industries, r.companies, r.seed) =>
            {
                *last = r
            }
            _ => out.push(r),
        }
    }
    out
}
