use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean `N x N x N` tensor `T[k,l,j]`, stored densely.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TensorFile", try_from = "TensorFile")]
pub struct TristochasticTensor {
    n: usize,
    entries: Vec<bool>,
}

/// On-disk form: the dimension plus the list of unit entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    triples: Vec<Triple>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub k: usize,
    pub l: usize,
    pub j: usize,
}

impl From<TristochasticTensor> for TensorFile {
    fn from(t: TristochasticTensor) -> Self {
        TensorFile {
            n: Some(t.n),
            triples: t.triples(),
        }
    }
}

impl TryFrom<TensorFile> for TristochasticTensor {
    type Error = Error;

    fn try_from(f: TensorFile) -> Result<Self> {
        let n = match f.n {
            Some(n) => n,
            None => f
                .triples
                .iter()
                .map(|t| t.k.max(t.l).max(t.j) + 1)
                .max()
                .unwrap_or(0),
        };
        TristochasticTensor::from_triples(n, &f.triples)
    }
}

impl fmt::Debug for TristochasticTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TristochasticTensor(n={}, {:?})", self.n, self.triples())
    }
}

impl TristochasticTensor {
    /// All-zero tensor of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![false; n * n * n],
        }
    }

    /// Tensor with ones exactly at the listed positions. Marginals are not
    /// checked here; see [`validate_tensor`].
    pub fn from_triples(n: usize, triples: &[Triple]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTensor("dimension must be at least 1".into()));
        }
        let mut t = Self::zeros(n);
        for tr in triples {
            if tr.k >= n || tr.l >= n || tr.j >= n {
                return Err(Error::InvalidTensor(format!(
                    "entry {tr:?} out of range for n={n}"
                )));
            }
            t.set(tr.k, tr.l, tr.j, true);
        }
        Ok(t)
    }

    /// Reads a JSON array of `{k, l, j}` objects (or an object with a
    /// `triples` field); the dimension is inferred unless given.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let file: TensorFile = if value.is_array() {
            TensorFile {
                n: None,
                triples: serde_json::from_value(value)?,
            }
        } else {
            serde_json::from_value(value)?
        };
        Self::try_from(file)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn index(&self, k: usize, l: usize, j: usize) -> usize {
        (k * self.n + l) * self.n + j
    }

    pub fn get(&self, k: usize, l: usize, j: usize) -> bool {
        self.entries[self.index(k, l, j)]
    }

    pub fn set(&mut self, k: usize, l: usize, j: usize, value: bool) {
        let i = self.index(k, l, j);
        self.entries[i] = value;
    }

    pub fn triples(&self) -> Vec<Triple> {
        let n = self.n;
        let mut out = Vec::new();
        for k in 0..n {
            for l in 0..n {
                for j in 0..n {
                    if self.get(k, l, j) {
                        out.push(Triple { k, l, j });
                    }
                }
            }
        }
        out
    }

    /// Classical product `r_k = Σ_{l,j} T[k,l,j] p_l q_j`.
    pub fn classical_product(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut r = vec![0.0; n];
        for (k, rk) in r.iter_mut().enumerate() {
            for l in 0..n {
                for j in 0..n {
                    if self.get(k, l, j) {
                        *rk += p[l] * q[j];
                    }
                }
            }
        }
        r
    }
}

/// Cyclic-group table: `T[k,l,j] = 1` iff `k = (l + j) mod n`.
pub fn default_tensor(n: usize) -> TristochasticTensor {
    assert!(n >= 1, "tensor dimension must be at least 1");
    let mut t = TristochasticTensor::zeros(n);
    for l in 0..n {
        for j in 0..n {
            t.set((l + j) % n, l, j, true);
        }
    }
    t
}

/// Which index a failing marginal sums over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    K,
    L,
    J,
}

/// First slice whose sum is not 1; `fixed` holds the two remaining indices in
/// `(k, l, j)` order with the summed index left out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorViolation {
    pub summed_over: Marginal,
    pub fixed: (usize, usize),
    pub sum: usize,
}

impl fmt::Display for TensorViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.summed_over {
            Marginal::K => "k",
            Marginal::L => "l",
            Marginal::J => "j",
        };
        write!(
            f,
            "sum over {name} at {:?} is {}, expected 1",
            self.fixed, self.sum
        )
    }
}

/// Checks the three marginals in the order k, l, j.
pub fn validate_tensor(t: &TristochasticTensor) -> std::result::Result<(), TensorViolation> {
    let n = t.dim();
    let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count();
    for marginal in [Marginal::K, Marginal::L, Marginal::J] {
        for a in 0..n {
            for b in 0..n {
                let sum = match marginal {
                    Marginal::K => count(&|k| t.get(k, a, b)),
                    Marginal::L => count(&|l| t.get(a, l, b)),
                    Marginal::J => count(&|j| t.get(a, b, j)),
                };
                if sum != 1 {
                    return Err(TensorViolation {
                        summed_over: marginal,
                        fixed: (a, b),
                        sum,
                    });
                }
            }
        }
    }
    Ok(())
}
