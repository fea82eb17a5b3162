use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

use super::Dataset;

/// Sizes of `parts` contiguous blocks over `total` items: as equal as
/// possible, with the first `total % parts` blocks one larger.
pub fn block_sizes(total: usize, parts: usize) -> Vec<usize> {
    assert!(parts > 0, "block_sizes with zero parts");
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

fn contiguous_blocks(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut start = 0;
    block_sizes(total, parts)
        .into_iter()
        .map(|size| {
            let block = (start..start + size).collect();
            start += size;
            block
        })
        .collect()
}

/// Column blocks for `m` industries over `n_features` columns.
pub fn vertical_split(n_features: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 {
        return Err(Error::Config("industry count must be at least 1".into()));
    }
    if m > n_features {
        return Err(Error::Data(format!(
            "too many industries: {m} industries for {n_features} features"
        )));
    }
    Ok(contiguous_blocks(n_features, m))
}

/// Row blocks for `n` companies. Rows are taken in ascending customer-id order
/// and the returned indices point into `customer_ids`.
pub fn horizontal_split(customer_ids: &[u64], n: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Config("company count must be at least 1".into()));
    }
    let z = customer_ids.len();
    if n > z {
        return Err(Error::Data(format!(
            "too many companies: {n} companies for {z} customers"
        )));
    }
    let mut by_id: Vec<usize> = (0..z).collect();
    by_id.sort_by_key(|&r| customer_ids[r]);
    Ok(contiguous_blocks(z, n)
        .into_iter()
        .map(|block| block.into_iter().map(|k| by_id[k]).collect())
        .collect())
}

/// Assignment of columns to industries and rows to companies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    feature_blocks: Vec<Vec<usize>>,
    companies_per_industry: Vec<usize>,
    company_row_blocks: Vec<Vec<Vec<usize>>>,
}

impl PartitionPlan {
    /// `companies[k]` companies in industry `k`; the industry count is `companies.len()`.
    pub fn new(dataset: &Dataset, companies: &[usize]) -> Result<Self> {
        let feature_blocks = vertical_split(dataset.n_features(), companies.len())?;
        let company_row_blocks = companies
            .iter()
            .map(|&n| horizontal_split(dataset.customer_ids(), n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_blocks,
            companies_per_industry: companies.to_vec(),
            company_row_blocks,
        })
    }

    /// `m` industries with `n` companies each.
    pub fn uniform(dataset: &Dataset, m: usize, n: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("industry count must be at least 1".into()));
        }
        Self::new(dataset, &vec![n; m])
    }

    pub fn industries(&self) -> usize {
        self.feature_blocks.len()
    }

    pub fn companies_in(&self, industry: usize) -> usize {
        self.companies_per_industry[industry]
    }

    pub fn companies_per_industry(&self) -> &[usize] {
        &self.companies_per_industry
    }

    pub fn feature_block(&self, industry: usize) -> &[usize] {
        &self.feature_blocks[industry]
    }

    pub fn feature_blocks(&self) -> &[Vec<usize>] {
        &self.feature_blocks
    }

    pub fn row_block(&self, industry: usize, company: usize) -> &[usize] {
        &self.company_row_blocks[industry][company]
    }

    /// Every `(industry, company)` pair in index order.
    pub fn company_pairs(&self) -> Vec<(usize, usize)> {
        self.companies_per_industry
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| (0..n).map(move |j| (i, j)))
            .collect()
    }

    /// The data each company holds, in `(industry, company)` order.
    pub fn company_views(&self, dataset: &Dataset) -> Vec<CompanyView> {
        self.company_pairs()
            .into_iter()
            .map(|(i, j)| {
                let rows = self.row_block(i, j);
                CompanyView {
                    industry: i,
                    company: j,
                    customer_ids: rows.iter().map(|&r| dataset.customer_ids()[r]).collect(),
                    features: dataset.features().select_rows(rows).select_cols(self.feature_block(i)),
                }
            })
            .collect()
    }
}

/// Total company count `T = Σ_k N_k`.
pub fn company_count(plan: &PartitionPlan) -> usize {
    plan.companies_per_industry.iter().sum()
}

/// One company's slice of the central table: its rows, its industry's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanyView {
    pub industry: usize,
    pub company: usize,
    pub customer_ids: Vec<u64>,
    pub features: Matrix,
}

impl CompanyView {
    pub fn len(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customer_ids.is_empty()
    }
}
