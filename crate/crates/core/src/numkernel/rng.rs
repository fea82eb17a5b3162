use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Matrix;

/// A named, reproducible source of randomness.
///
/// A stream is the pair `(root_seed, path)`. Its generator is ChaCha20 keyed by
/// SHA-256 over the root seed (8 bytes LE) followed by each path label as an
/// 8-byte LE length and its UTF-8 bytes. Equal pairs always yield equal
/// sequences; distinct paths give unrelated keys.
///
/// Streams are values: drawing from one never advances it. Callers that need
/// fresh draws derive a child path (`round:3`, `epoch:7`, ...).
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<String>,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RngStream({}:{})", self.root_seed, self.path_string())
    }
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    /// Stream at `label` below this one. Labels may contain `/` to descend several levels.
    pub fn child(&self, label: impl AsRef<str>) -> Self {
        let mut path = self.path.clone();
        path.extend(label.as_ref().split('/').filter(|s| !s.is_empty()).map(str::to_owned));
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn path_string(&self) -> String {
        self.path.join("/")
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.root_seed.to_le_bytes());
        for label in &self.path {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        ChaCha20Rng::from_seed(hasher.finalize().into())
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.generator());
        idx
    }
}

/// `rows × cols` i.i.d. draws from N(0, 1), row-major, deterministic in the stream.
pub fn sample_standard_normal(rng: &RngStream, rows: usize, cols: usize) -> Matrix {
    let mut g = rng.generator();
    let values: Vec<f64> = (0..rows * cols).map(|_| g.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, values).expect("finite normal draws")
}

/// `rows × cols` i.i.d. draws from U[lo, hi).
pub fn sample_uniform(rng: &RngStream, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let mut g = rng.generator();
    let values: Vec<f64> = (0..rows * cols).map(|_| g.gen_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, values).expect("finite uniform draws")
}
