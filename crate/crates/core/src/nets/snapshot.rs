use serde::{Deserialize, Serialize};

use crate::error::{Result, TransportError};

use super::layer::Layered;

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: [usize; 2],
    /// Row-major.
    pub values: Vec<f64>,
}

/// Flat list of every parameter tensor of a model, in layer order.
///
/// Layer `L` contributes `L.weight` (`fan_in × fan_out`) then `L.bias` (`1 × fan_out`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub tensors: Vec<ParamTensor>,
}

impl ParamSnapshot {
    pub fn of<M: Layered + ?Sized>(model: &M) -> Self {
        let mut tensors = Vec::new();
        for layer in model.layers() {
            tensors.push(ParamTensor {
                name: format!("{}.weight", layer.name),
                shape: [layer.fan_in(), layer.fan_out()],
                values: layer.weights.as_slice().to_vec(),
            });
            tensors.push(ParamTensor {
                name: format!("{}.bias", layer.name),
                shape: [1, layer.fan_out()],
                values: layer.bias.clone(),
            });
        }
        Self { tensors }
    }

    /// Binary form: `count u32 | { name_len u32 | name | rows u32 | cols u32 | f64... }`, all little-endian.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape[0] as u32).to_le_bytes());
            out.extend_from_slice(&(t.shape[1] as u32).to_le_bytes());
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], TransportError> {
            if cur.len() < n {
                return Err(TransportError::Truncated {
                    needed: n,
                    available: cur.len(),
                });
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        let count = u32_at(take(4)?);
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32_at(take(4)?);
            let name = String::from_utf8(take(len)?.to_vec())
                .map_err(|e| TransportError::Malformed(format!("tensor name: {e}")))?;
            let rows = u32_at(take(4)?);
            let cols = u32_at(take(4)?);
            let raw = take(rows * cols * 8)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(ParamTensor {
                name,
                shape: [rows, cols],
                values,
            });
        }
        Ok(Self { tensors })
    }
}
