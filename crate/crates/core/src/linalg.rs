//! Dense complex linear algebra for small registers.
//!
//! Matrices are stored row-major. Everything here is sized for a handful of
//! qubits (dimensions up to 64), so no blocking or sparsity is attempted.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for structural checks (unitarity, Hermiticity, trace).
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Tolerance used when comparing against independent oracles.
pub const ORACLE_TOL: f64 = 1e-9;
/// Norms at or below this are treated as exactly zero.
pub const ZERO_GUARD: f64 = 1e-12;
/// Most negative eigenvalue accepted for a density matrix.
pub const EIGEN_FLOOR: f64 = -1e-9;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C_ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C_ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Real matrix from row-major values.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "from_real: wrong value count");
        Self {
            rows,
            cols,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn column_vector(values: Vec<Complex64>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Real parts in row-major order.
    pub fn re(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Panics if the inner dimensions disagree.
    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![C_ZERO; n * p];
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == C_ZERO {
                    continue;
                }
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix {
            rows: n,
            cols: p,
            data: out,
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn add(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        ComplexMatrix { data, ..*self }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        ComplexMatrix { data, ..*self }
    }

    pub fn add_assign(&mut self, other: &ComplexMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        ComplexMatrix { data, ..*self }
    }

    pub fn scale_real(&self, s: f64) -> ComplexMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        ComplexMatrix { data, ..*self }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .map(|z| z.norm())
                    .sum()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius distance to another matrix of the same shape.
    pub fn distance(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "distance: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.data[r * n + c] - self.data[c * n + r].conj()).norm());
            }
        }
        worst
    }

    /// Largest entrywise deviation from anti-Hermiticity.
    pub fn anti_hermitian_deviation(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.data[r * n + c] + self.data[c * n + r].conj()).norm());
            }
        }
        worst
    }

    /// ‖M†M − I‖_F.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .distance(&ComplexMatrix::identity(self.cols))
    }

    /// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and
    /// the unitary whose columns are the matching eigenvectors.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, ComplexMatrix) {
        assert!(self.is_square(), "hermitian_eigen: non-square");
        let n = self.rows;
        let m = DMatrix::<Complex64>::from_row_slice(n, n, &self.data);
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        let sym = self.add(&self.adjoint()).scale_real(0.5);
        sym.hermitian_eigen().0[0]
    }

    /// General matrix exponential by scaling and squaring of a Taylor series.
    ///
    /// Used for non-normal matrices (the block-triangular form behind the
    /// exponential's derivative). The anti-Hermitian forward path goes
    /// through [`matexp_antihermitian`] instead.
    pub fn expm(&self) -> ComplexMatrix {
        assert!(self.is_square(), "expm: non-square");
        let n = self.rows;
        let norm = self.norm_inf();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale_real(0.5f64.powi(squarings as i32));
        let mut sum = ComplexMatrix::identity(n);
        let mut term = ComplexMatrix::identity(n);
        for k in 1..=30 {
            term = term.matmul(&scaled).scale_real(1.0 / k as f64);
            sum.add_assign(&term);
            if term.max_abs() <= 1e-18 * sum.max_abs() {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.matmul(&sum);
        }
        sum
    }

    /// Sub-block `[r0, r0+rows) x [c0, c0+cols)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    /// Row-major flatten into a column vector.
    pub fn flatten(&self) -> ComplexMatrix {
        ComplexMatrix::column_vector(self.data.clone())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Kronecker product: `out[(i·b.rows+k),(j·b.cols+l)] = a[i,j]·b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == C_ZERO {
                continue;
            }
            for k in 0..b.rows {
                let base = (i * b.rows + k) * cols + j * b.cols;
                let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, bkl) in out.data[base..base + b.cols].iter_mut().zip(b_row) {
                    *o = aij * bkl;
                }
            }
        }
    }
    out
}

/// `exp(a)` for anti-Hermitian `a`, via the eigen-decomposition of `H = i·a`:
/// `exp(a) = V·exp(−iΛ)·V†`.
pub fn matexp_antihermitian(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential of a {}x{} matrix",
            a.rows, a.cols
        )));
    }
    let deviation = a.anti_hermitian_deviation();
    if deviation > STRUCTURAL_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotAntiHermitian(deviation));
    }
    let h = a.scale(C_I);
    let (values, vectors) = h.hermitian_eigen();
    let n = a.rows;
    let phases: Vec<Complex64> = values
        .iter()
        .map(|&l| Complex64::from_polar(1.0, -l))
        .collect();
    let mut scaled = vectors.clone();
    for r in 0..n {
        for c in 0..n {
            scaled[(r, c)] *= phases[c];
        }
    }
    Ok(scaled.matmul(&vectors.adjoint()))
}

/// Partial trace over the second tensor factor of a `(dim_a·dim_b)`-square
/// matrix: `out[k,k'] = Σ_i m[(k·dim_b+i),(k'·dim_b+i)]`.
pub fn partial_trace_second(
    m: &ComplexMatrix,
    dim_a: usize,
    dim_b: usize,
) -> Result<ComplexMatrix> {
    let d = dim_a * dim_b;
    if m.rows != d || m.cols != d {
        return Err(Error::DimensionMismatch(format!(
            "partial trace of {}x{} over {}x{} factors",
            m.rows, m.cols, dim_a, dim_b
        )));
    }
    let mut out = ComplexMatrix::zeros(dim_a, dim_a);
    for k in 0..dim_a {
        for kp in 0..dim_a {
            let mut acc = C_ZERO;
            for i in 0..dim_b {
                acc += m.data[(k * dim_b + i) * d + kp * dim_b + i];
            }
            out.data[k * dim_a + kp] = acc;
        }
    }
    Ok(out)
}

pub fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Normalize to unit L2 norm. Fails with [`Error::ZeroNorm`] when the input
/// norm is at or below [`ZERO_GUARD`].
pub fn l2_normalize(v: &[Complex64]) -> Result<Statevector> {
    let norm = l2_norm(v);
    if norm <= ZERO_GUARD {
        return Err(Error::ZeroNorm(norm));
    }
    Ok(Statevector {
        amplitudes: v.iter().map(|z| z / norm).collect(),
    })
}

/// Unit-norm pure state of a register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statevector {
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if !amplitudes.len().is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "statevector dimension {} is not a power of two",
                amplitudes.len()
            )));
        }
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidDensity(format!("statevector norm {norm}")));
        }
        Ok(Self { amplitudes })
    }

    pub(crate) fn new_unchecked(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![C_ZERO; dim];
        amplitudes[index] = C_ONE;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amplitudes)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> DensityMatrix {
        let n = self.dim();
        let m = ComplexMatrix::from_fn(n, n, |r, c| self.amplitudes[r] * self.amplitudes[c].conj());
        DensityMatrix(m)
    }
}

/// Trace-one Hermitian positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and the eigenvalue floor.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() || !m.rows.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix of shape {}x{}",
                m.rows, m.cols
            )));
        }
        let herm = m.hermitian_deviation();
        if herm > STRUCTURAL_TOL {
            return Err(Error::InvalidDensity(format!(
                "Hermiticity deviation {herm:e}"
            )));
        }
        let tr = m.trace();
        if (tr - C_ONE).norm() > STRUCTURAL_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr}")));
        }
        let min_eig = m.min_hermitian_eigenvalue();
        if min_eig < EIGEN_FLOOR {
            return Err(Error::InvalidDensity(format!(
                "minimum eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is a density matrix by construction.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::diag_real(probabilities))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.min_hermitian_eigenvalue()
    }

    /// Eigenvalues with negative roundoff clamped to zero. Diagnostics only.
    pub fn clamped_spectrum(&self) -> Vec<f64> {
        self.0
            .hermitian_eigen()
            .0
            .into_iter()
            .map(|l| l.max(0.0))
            .collect()
    }
}
