use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

/// Rows keyed by customer id, one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct IdRows {
    pub ids: Vec<u64>,
    pub rows: Matrix,
}

impl IdRows {
    pub fn new(ids: Vec<u64>, rows: Matrix) -> Result<Self> {
        if ids.len() != rows.rows() {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), rows.rows())));
        }
        Ok(Self { ids, rows })
    }
}

/// Stacks one industry's company uploads and sorts rows by ascending customer id.
pub fn align_industry(parts: &[IdRows]) -> Result<IdRows> {
    let cols = parts.first().map_or(0, |p| p.rows.cols());
    let mut index: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (p, part) in parts.iter().enumerate() {
        if part.rows.cols() != cols {
            return Err(Error::Shape(format!(
                "company upload {p} has width {}, expected {cols}",
                part.rows.cols()
            )));
        }
        for (r, &id) in part.ids.iter().enumerate() {
            if index.insert(id, (p, r)).is_some() {
                return Err(Error::Data(format!("customer {id} uploaded by more than one company")));
            }
        }
    }
    let mut values = Vec::with_capacity(index.len() * cols);
    for &(p, r) in index.values() {
        values.extend_from_slice(parts[p].rows.row(r));
    }
    Ok(IdRows {
        ids: index.keys().copied().collect(),
        rows: Matrix::from_vec(index.len(), cols, values)?,
    })
}

/// Fails with the first customer id that one industry has and another lacks.
pub fn check_same_ids(per_industry: &[&[u64]]) -> Result<()> {
    let Some(reference) = per_industry.first() else {
        return Ok(());
    };
    for (k, ids) in per_industry.iter().enumerate().skip(1) {
        if ids == reference {
            continue;
        }
        let a: std::collections::BTreeSet<u64> = reference.iter().copied().collect();
        let b: std::collections::BTreeSet<u64> = ids.iter().copied().collect();
        if let Some(id) = a.difference(&b).next() {
            return Err(Error::Data(format!(
                "misaligned customers: id {id} present in industry 0 but missing from industry {k}"
            )));
        }
        if let Some(id) = b.difference(&a).next() {
            return Err(Error::Data(format!(
                "misaligned customers: id {id} present in industry {k} but missing from industry 0"
            )));
        }
        return Err(Error::Data(format!(
            "misaligned customers: industry {k} row order differs from industry 0"
        )));
    }
    Ok(())
}

/// Aligns every industry to ascending customer id and checks they agree row by row.
pub fn align_by_customer(industries: &[Vec<IdRows>]) -> Result<Vec<IdRows>> {
    let aligned = industries
        .iter()
        .map(|parts| align_industry(parts))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<&[u64]> = aligned.iter().map(|a| a.ids.as_slice()).collect();
    check_same_ids(&ids)?;
    Ok(aligned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::RngStream;

    fn rows_for(ids: &[u64], width: usize, salt: f64) -> IdRows {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| (0..width).map(|c| id as f64 * 10.0 + c as f64 + salt).collect())
            .collect();
        IdRows::new(ids.to_vec(), Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn permuted_industries_agree() {
        let a = vec![rows_for(&[3, 1], 2, 0.0), rows_for(&[2], 2, 0.0)];
        let b = vec![rows_for(&[2, 3, 1], 1, 0.5)];
        let out = align_by_customer(&[a, b]).unwrap();
        assert_eq!(out[0].ids, vec![1, 2, 3]);
        assert_eq!(out[1].ids, vec![1, 2, 3]);
        assert_eq!(out[0].rows.row(2), &[30.0, 31.0]);
        assert_eq!(out[1].rows.row(0), &[10.5]);
    }

    #[test]
    fn aligned_input_unchanged() {
        let a = rows_for(&[1, 2, 3], 2, 0.0);
        let out = align_by_customer(&[vec![a.clone()]]).unwrap();
        assert_eq!(out[0], a);
    }

    #[test]
    fn missing_id_is_named() {
        let a = vec![rows_for(&[1, 2, 3], 1, 0.0)];
        let b = vec![rows_for(&[1, 3], 1, 0.0)];
        let err = align_by_customer(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("id 2"), "{err}");
    }

    #[test]
    fn shuffled_hundred_ids_match_sorted_oracle() {
        let ids: Vec<u64> = (0..100).map(|i| 7 * i + 5).collect();
        let mut oracle = ids.clone();
        oracle.sort_unstable();
        let industries: Vec<Vec<IdRows>> = (0..3)
            .map(|k| {
                let perm = RngStream::new(k).child("shuffle").permutation(ids.len());
                let shuffled: Vec<u64> = perm.iter().map(|&p| ids[p]).collect();
                // uneven company chunks
                shuffled
                    .chunks(30 + 5 * k as usize)
                    .map(|c| rows_for(c, 2, k as f64))
                    .collect()
            })
            .collect();
        let out = align_by_customer(&industries).unwrap();
        for (k, ind) in out.iter().enumerate() {
            assert_eq!(ind.ids, oracle);
            for (r, &id) in oracle.iter().enumerate() {
                assert_eq!(ind.rows[(r, 0)], id as f64 * 10.0 + k as f64);
            }
        }
    }
}
