//! The su(2^n) generator basis as Pauli strings, and the SU(2^n) unitary
//! `U(θ) = exp(Σ_m θ_m G_m)` with `G_m = i·P_m`.
//!
//! Generators are ordered lexicographically over the letters `I < X < Y < Z`,
//! leftmost letter most significant, with the all-identity string dropped.
//! The leftmost letter acts on the first tensor factor (the most significant
//! bit of a basis index). This ordering is frozen: parameter vectors depend
//! on it, and checkpoints record [`ORDERING_TAG`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{matexp_antihermitian, ComplexMatrix, C_I, C_ONE, C_ZERO};

pub const ORDERING_TAG: &str = "pauli-lex-IXYZ";

const SOFT_QUBIT_CAP: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    const ALL: [PauliLetter; 4] = [
        PauliLetter::I,
        PauliLetter::X,
        PauliLetter::Y,
        PauliLetter::Z,
    ];

    pub fn as_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }

    /// Column of the single non-zero entry in `row`, and its value.
    fn entry(self, row: usize) -> (usize, Complex64) {
        match self {
            PauliLetter::I => (row, C_ONE),
            PauliLetter::X => (1 - row, C_ONE),
            PauliLetter::Y => {
                if row == 0 {
                    (1, -C_I)
                } else {
                    (0, C_I)
                }
            }
            PauliLetter::Z => (row, if row == 0 { C_ONE } else { -C_ONE }),
        }
    }

    pub fn matrix(self) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |r, c| {
            let (col, v) = self.entry(r);
            if col == c {
                v
            } else {
                C_ZERO
            }
        })
    }
}

/// One generator `i·P`, stored both densely and as its monomial pattern
/// (every Pauli string has exactly one non-zero per row).
#[derive(Clone, Debug)]
struct Generator {
    label: String,
    cols: Vec<usize>,
    values: Vec<Complex64>,
    dense: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct GeneratorBasis {
    n_qubits: usize,
    generators: Vec<Generator>,
}

/// Build the `4^n − 1` generators in canonical order.
pub fn enumerate_generators(n_qubits: usize) -> GeneratorBasis {
    assert!(n_qubits >= 1, "at least one qubit is required");
    if n_qubits > SOFT_QUBIT_CAP {
        log::warn!("{n_qubits} qubits requested; dense simulation cost grows as 16^n");
    }
    let dim = 1usize << n_qubits;
    let count = 1usize << (2 * n_qubits);
    let mut generators = Vec::with_capacity(count - 1);
    for code in 1..count {
        // base-4 digits of `code`, most significant first
        let letters: Vec<PauliLetter> = (0..n_qubits)
            .map(|q| PauliLetter::ALL[(code >> (2 * (n_qubits - 1 - q))) & 3])
            .collect();
        let mut cols = Vec::with_capacity(dim);
        let mut values = Vec::with_capacity(dim);
        for row in 0..dim {
            let mut col = 0usize;
            let mut value = C_I;
            for (q, letter) in letters.iter().enumerate() {
                let shift = n_qubits - 1 - q;
                let (c, v) = letter.entry((row >> shift) & 1);
                col |= c << shift;
                value *= v;
            }
            cols.push(col);
            values.push(value);
        }
        let mut dense = ComplexMatrix::zeros(dim, dim);
        for row in 0..dim {
            dense[(row, cols[row])] = values[row];
        }
        generators.push(Generator {
            label: letters.iter().map(|l| l.as_char()).collect(),
            cols,
            values,
            dense,
        });
    }
    GeneratorBasis {
        n_qubits,
        generators,
    }
}

impl GeneratorBasis {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn label(&self, m: usize) -> &str {
        &self.generators[m].label
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.generators.iter().map(|g| g.label.as_str())
    }

    /// Dense anti-Hermitian generator `G_m = i·P_m`.
    pub fn generator(&self, m: usize) -> &ComplexMatrix {
        &self.generators[m].dense
    }

    /// `Σ_m θ_m G_m`.
    pub fn combine(&self, theta: &[f64]) -> Result<ComplexMatrix> {
        if theta.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: theta.len(),
            });
        }
        let dim = self.dim();
        let mut out = ComplexMatrix::zeros(dim, dim);
        let data = out.data_mut();
        for (g, &t) in self.generators.iter().zip(theta) {
            for row in 0..dim {
                data[row * dim + g.cols[row]] += g.values[row] * t;
            }
        }
        Ok(out)
    }

    /// Coordinates `Re tr(G_m† X)` for every generator; the adjoint of
    /// [`combine`](Self::combine) under the real inner product.
    pub fn project(&self, x: &ComplexMatrix) -> Vec<f64> {
        let dim = self.dim();
        let data = x.data();
        self.generators
            .iter()
            .map(|g| {
                (0..dim)
                    .map(|row| (g.values[row].conj() * data[row * dim + g.cols[row]]).re)
                    .sum()
            })
            .collect()
    }
}

/// `U(θ) = exp(Σ_m θ_m G_m)`.
pub fn su_unitary(basis: &GeneratorBasis, theta: &[f64]) -> Result<ComplexMatrix> {
    if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
        return Err(Error::ShapeMismatch(format!("non-finite angle {bad}")));
    }
    matexp_antihermitian(&basis.combine(theta)?)
}
