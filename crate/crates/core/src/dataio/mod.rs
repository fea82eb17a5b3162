//! Central dataset loading and the vertical/horizontal partitioning that turns
//! one table into industries and companies.

mod align;
mod csvload;
mod labels;
mod split;

pub use align::{align_by_customer, align_industry, check_same_ids, IdRows};
pub use csvload::{load_csv, RawTable};
pub use labels::binarize_labels;
pub use split::{block_sizes, company_count, horizontal_split, vertical_split, CompanyView, PartitionPlan};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Customer table with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    customer_ids: Vec<u64>,
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Validated constructor: unique ids, consistent lengths, both classes present.
    pub fn new(customer_ids: Vec<u64>, features: Matrix, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let ds = Self::unchecked_classes(customer_ids, features, labels, feature_names)?;
        let positives = ds.labels.iter().filter(|&&l| l == 1).count();
        if positives == 0 || positives == ds.labels.len() {
            return Err(Error::Data(format!(
                "labels are single-class ({positives} of {} positive)",
                ds.labels.len()
            )));
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but tolerates a single class, as subsets of a
    /// valid dataset may legitimately have.
    fn unchecked_classes(
        customer_ids: Vec<u64>,
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let z = customer_ids.len();
        if features.rows() != z || labels.len() != z {
            return Err(Error::Data(format!(
                "{z} ids, {} feature rows, {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Data(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {bad} is not binary")));
        }
        let mut seen = HashSet::with_capacity(z);
        if let Some(dup) = customer_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Data(format!("duplicate customer_id {dup}")));
        }
        Ok(Self {
            customer_ids,
            features,
            labels,
            feature_names,
        })
    }

    /// Binarizes the raw label column of a parsed table.
    pub fn from_raw(raw: RawTable) -> Result<Self> {
        let labels = binarize_labels(&raw.raw_labels)?;
        Self::new(raw.customer_ids, raw.features, labels, raw.feature_names)
    }

    pub fn from_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_raw(load_csv(path)?)
    }

    pub fn len(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customer_ids.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn customer_ids(&self) -> &[u64] {
        &self.customer_ids
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows picked by index, in the given order. The result may be single-class.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            customer_ids: rows.iter().map(|&r| self.customer_ids[r]).collect(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same rows with a replacement feature matrix.
    pub fn with_features(&self, features: Matrix, feature_names: Vec<String>) -> Result<Dataset> {
        Self::unchecked_classes(self.customer_ids.clone(), features, self.labels.clone(), feature_names)
    }

    /// Same rows and features with replacement labels.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        Self::unchecked_classes(
            self.customer_ids.clone(),
            self.features.clone(),
            labels,
            self.feature_names.clone(),
        )
    }

    /// Label lookup by customer id.
    pub fn label_of(&self) -> std::collections::HashMap<u64, u8> {
        self.customer_ids
            .iter()
            .copied()
            .zip(self.labels.iter().copied())
            .collect()
    }
}
