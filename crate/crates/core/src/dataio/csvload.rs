use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// A parsed CSV before label binarization.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub path: PathBuf,
    pub customer_ids: Vec<u64>,
    pub features: Matrix,
    pub raw_labels: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// Reads `customer_id,<f1>,...,<fn>,label`.
///
/// Row numbers in errors are 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 0, "header", e.to_string()))?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_owned()).collect();
    if names.len() < 3 {
        return Err(parse_error(
            path,
            0,
            "header",
            format!(
                "need customer_id, at least one feature, and label; got {} columns",
                names.len()
            ),
        ));
    }
    if names[0] != "customer_id" {
        return Err(parse_error(
            path,
            0,
            "header",
            format!("first column is `{}`, expected `customer_id`", names[0]),
        ));
    }
    if names[names.len() - 1] != "label" {
        return Err(parse_error(
            path,
            0,
            "header",
            format!("last column is `{}`, expected `label`", names[names.len() - 1]),
        ));
    }
    let feature_names: Vec<String> = names[1..names.len() - 1].to_vec();
    let n = feature_names.len();

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut first_row_of: HashMap<u64, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(path, row, "*", e.to_string()))?;
        if record.len() != n + 2 {
            return Err(parse_error(
                path,
                row,
                "*",
                format!("{} fields, expected {}", record.len(), n + 2),
            ));
        }
        let id_text = record[0].trim();
        let id: u64 = id_text.parse().map_err(|_| {
            parse_error(
                path,
                row,
                "customer_id",
                format!("`{id_text}` is not an unsigned integer"),
            )
        })?;
        if let Some(prev) = first_row_of.insert(id, row) {
            return Err(Error::Data(format!(
                "duplicate customer_id {id} in {} (rows {prev} and {row})",
                path.display()
            )));
        }
        ids.push(id);
        for (c, name) in feature_names.iter().enumerate() {
            values.push(parse_real(path, row, name, &record[c + 1])?);
        }
        labels.push(parse_real(path, row, "label", &record[n + 1])?);
    }
    if ids.is_empty() {
        return Err(parse_error(path, 0, "*", "no data rows".into()));
    }
    let features = Matrix::from_vec(ids.len(), n, values)?;
    Ok(RawTable {
        path: path.to_owned(),
        customer_ids: ids,
        features,
        raw_labels: labels,
        feature_names,
    })
}

fn parse_real(path: &Path, row: usize, column: &str, text: &str) -> Result<f64> {
    let text = text.trim();
    if text.is_empty() {
        return Err(parse_error(path, row, column, "missing value".into()));
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(parse_error(path, row, column, format!("`{text}` is not finite"))),
        Err(_) => Err(parse_error(path, row, column, format!("`{text}` is not numeric"))),
    }
}

fn parse_error(path: &Path, row: usize, column: &str, reason: String) -> Error {
    Error::Parse {
        path: path.to_owned(),
        row,
        column: column.to_owned(),
        reason,
    }
}
