//! Matrix-level tape for reverse-mode differentiation.
//!
//! Every node holds a complex matrix. Real quantities are matrices with zero
//! imaginary part. Cotangents follow the real-pair convention: for a complex
//! entry `z = x + iy` the cotangent is `∂L/∂x + i·∂L/∂y`, so that
//! `dL = Re Σ conj(z̄)·dz`. Parameters are always real, and their gradient is
//! the real part of the cotangent reaching the parameter leaf.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{l2_norm, ComplexMatrix, C_I, C_ZERO, ZERO_GUARD};
use crate::pauli::GeneratorBasis;
use crate::qdseq::{
    assemble_channel_unitary, stick_breaking_eigenvalues, stick_breaking_vjp, TristochasticTensor,
};

/// Clamp applied to predicted probabilities before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Constant,
    Param {
        offset: usize,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, Complex64),
    Adjoint(Var),
    Kron(Var, Var),
    PartialTrace {
        src: Var,
        dim_a: usize,
        dim_b: usize,
    },
    Tanh(Var),
    Sigmoid(Var),
    LinComb {
        coeffs: Var,
        basis: Arc<GeneratorBasis>,
    },
    ExpAntiHermitian(Var),
    SuStates {
        thetas: Var,
        basis: Arc<GeneratorBasis>,
    },
    Column {
        src: Var,
        index: usize,
    },
    SliceRows {
        src: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    SumColumns(Var),
    Sum(Vec<Var>),
    Normalize(Var),
    Flatten(Var),
    RealPart(Var),
    ImagPart(Var),
    Diag(Var),
    StickBreaking(Var),
    ChannelUnitary {
        tensor: Arc<TristochasticTensor>,
        blocks: Vec<Var>,
    },
    SquaredError {
        pred: Var,
        target: f64,
    },
    BinaryCrossEntropy {
        pred: Var,
        label: f64,
    },
}

struct Node {
    value: ComplexMatrix,
    op: Op,
    requires_grad: bool,
}

/// A single forward evaluation, recorded for one backward pass.
///
/// Parameters are read from the flat slice given at construction; a tape
/// is never reused across parameter updates.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
    registered: Vec<(usize, usize)>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

fn real_matrix(rows: usize, cols: usize, mut f: impl FnMut(usize) -> f64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(rows, cols);
    for (i, z) in m.data_mut().iter_mut().enumerate() {
        *z = Complex64::new(f(i), 0.0);
    }
    m
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cotangent of `exp` at an anti-Hermitian `a`: the Fréchet derivative of
/// `exp` at `a†` applied to `bar`. With `ia = V diag(λ) V†` it is
/// `V [(V† bar V) ∘ Φ] V†`, where `Φ_jk = e^{i(λ_j+λ_k)/2} sinc((λ_j−λ_k)/2)`
/// is the divided difference of `exp` at the eigenvalues `iλ` of `a†`.
pub(crate) fn exp_vjp(a: &ComplexMatrix, bar: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    let (lambda, v) = a.scale(C_I).hermitian_eigen();
    let v_adj = v.adjoint();
    let mut inner = v_adj.matmul(bar).matmul(&v);
    for j in 0..n {
        for k in 0..n {
            let half_gap = 0.5 * (lambda[j] - lambda[k]);
            let phase = Complex64::from_polar(1.0, 0.5 * (lambda[j] + lambda[k]));
            inner[(j, k)] *= phase * sinc(half_gap);
        }
    }
    v.matmul(&inner).matmul(&v_adj)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Same cotangent from the upper-right block of `exp([[a†, bar], [0, a†]])`;
/// valid for any square `a`.
#[cfg(test)]
pub(crate) fn exp_vjp_block(a: &ComplexMatrix, bar: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    let ah = a.adjoint();
    let mut aug = ComplexMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            aug[(r, c)] = ah[(r, c)];
            aug[(n + r, n + c)] = ah[(r, c)];
            aug[(r, n + c)] = bar[(r, c)];
        }
    }
    aug.expm().block(0, n, n, n)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            registered: Vec::new(),
        }
    }

    pub fn params(&self) -> &[f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameter ranges `(offset, len)` read by this tape, in registration order.
    pub fn registered_params(&self) -> &[(usize, usize)] {
        &self.registered
    }

    pub fn value(&self, v: Var) -> &ComplexMatrix {
        &self.nodes[v.0].value
    }

    /// Real part of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)].re
    }

    fn push(&mut self, value: ComplexMatrix, op: Op, parents: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param { .. } => true,
            Op::Constant => false,
            _ => parents.iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: ComplexMatrix) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn constant_real(&mut self, rows: usize, cols: usize, values: &[f64]) -> Var {
        self.constant(ComplexMatrix::from_real(rows, cols, values))
    }

    /// Parameter leaf: `rows x cols` values read row-major from `params[offset..]`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Result<Var> {
        let end = offset + rows * cols;
        if end > self.params.len() {
            return Err(Error::LengthMismatch {
                expected: end,
                got: self.params.len(),
            });
        }
        let value = ComplexMatrix::from_real(rows, cols, &self.params[offset..end]);
        self.registered.push((offset, rows * cols));
        Ok(self.push(value, Op::Param { offset }, &[]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a).1 != self.shape(b).0 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let value = self.value(a).matmul(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let value = self.value(a).add(self.value(b));
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("sub", self.shape(a), self.shape(b)));
        }
        let value = self.value(a).sub(self.value(b));
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// `a + b·1ᵀ`: adds the column vector `b` to every column of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        if self.shape(b) != (ra, 1) {
            return Err(shape_err("add_bias", self.shape(a), self.shape(b)));
        }
        let mut value = self.value(a).clone();
        let bias = self.value(b).data().to_vec();
        for r in 0..ra {
            for c in 0..ca {
                value[(r, c)] += bias[r];
            }
        }
        Ok(self.push(value, Op::AddBias(a, b), &[a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("hadamard", self.shape(a), self.shape(b)));
        }
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = ComplexMatrix::new(r, c, data)?;
        Ok(self.push(value, Op::Hadamard(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: Complex64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn adjoint(&mut self, a: Var) -> Var {
        let value = self.value(a).adjoint();
        self.push(value, Op::Adjoint(a), &[a])
    }

    pub fn kron(&mut self, a: Var, b: Var) -> Var {
        let value = crate::linalg::kron(self.value(a), self.value(b));
        self.push(value, Op::Kron(a, b), &[a, b])
    }

    pub fn partial_trace_second(&mut self, src: Var, dim_a: usize, dim_b: usize) -> Result<Var> {
        let value = crate::linalg::partial_trace_second(self.value(src), dim_a, dim_b)?;
        Ok(self.push(value, Op::PartialTrace { src, dim_a, dim_b }, &[src]))
    }

    /// Elementwise tanh of the real part.
    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let value = real_matrix(r, c, |i| src.data()[i].re.tanh());
        self.push(value, Op::Tanh(a), &[a])
    }

    /// Elementwise logistic sigmoid of the real part.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let value = real_matrix(r, c, |i| sigmoid(src.data()[i].re));
        self.push(value, Op::Sigmoid(a), &[a])
    }

    /// `Σ_m θ_m G_m` for a real coefficient column `θ`.
    pub fn lin_comb(&mut self, coeffs: Var, basis: &Arc<GeneratorBasis>) -> Result<Var> {
        if self.shape(coeffs) != (basis.len(), 1) {
            return Err(shape_err("lin_comb", self.shape(coeffs), (basis.len(), 1)));
        }
        let theta = self.value(coeffs).re();
        let value = basis.combine(&theta)?;
        Ok(self.push(
            value,
            Op::LinComb {
                coeffs,
                basis: Arc::clone(basis),
            },
            &[coeffs],
        ))
    }

    pub fn exp_anti_hermitian(&mut self, a: Var) -> Result<Var> {
        let value = crate::linalg::matexp_antihermitian(self.value(a))?;
        Ok(self.push(value, Op::ExpAntiHermitian(a), &[a]))
    }

    /// Column `j` of the output is `exp(Σ_m Θ[m,j] G_m)|0…0⟩`.
    pub fn su_states(&mut self, thetas: Var, basis: &Arc<GeneratorBasis>) -> Result<Var> {
        let (rows, cols) = self.shape(thetas);
        if rows != basis.len() {
            return Err(shape_err("su_states", (rows, cols), (basis.len(), cols)));
        }
        let dim = basis.dim();
        let src = self.value(thetas);
        let mut value = ComplexMatrix::zeros(dim, cols);
        for j in 0..cols {
            let theta: Vec<f64> = (0..rows).map(|m| src[(m, j)].re).collect();
            let u = crate::pauli::su_unitary(basis, &theta)?;
            for r in 0..dim {
                value[(r, j)] = u[(r, 0)];
            }
        }
        Ok(self.push(
            value,
            Op::SuStates {
                thetas,
                basis: Arc::clone(basis),
            },
            &[thetas],
        ))
    }

    pub fn column(&mut self, src: Var, index: usize) -> Result<Var> {
        let (rows, cols) = self.shape(src);
        if index >= cols {
            return Err(Error::ShapeMismatch(format!(
                "column {index} of a {rows}x{cols} matrix"
            )));
        }
        let value = ComplexMatrix::column_vector(self.value(src).column(index));
        Ok(self.push(value, Op::Column { src, index }, &[src]))
    }

    pub fn slice_rows(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(src);
        if start + len > rows {
            return Err(Error::ShapeMismatch(format!(
                "rows {start}..{} of a {rows}x{cols} matrix",
                start + len
            )));
        }
        let value = self.value(src).block(start, 0, len, cols);
        Ok(self.push(value, Op::SliceRows { src, start }, &[src]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(shape_err(
                    "concat_rows",
                    self.shape(parts[0]),
                    self.shape(p),
                ));
            }
            rows += self.shape(p).0;
            data.extend_from_slice(self.value(p).data());
        }
        let value = ComplexMatrix::new(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Sum of all columns, as a column vector.
    pub fn sum_columns(&mut self, src: Var) -> Var {
        let (rows, cols) = self.shape(src);
        let m = self.value(src);
        let mut out = vec![C_ZERO; rows];
        for (r, o) in out.iter_mut().enumerate() {
            for c in 0..cols {
                *o += m[(r, c)];
            }
        }
        self.push(
            ComplexMatrix::column_vector(out),
            Op::SumColumns(src),
            &[src],
        )
    }

    /// Left-to-right sum of equally shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            if self.shape(p) != value.shape() {
                return Err(shape_err("sum", value.shape(), self.shape(p)));
            }
            value.add_assign(self.value(p));
        }
        Ok(self.push(value, Op::Sum(parts.to_vec()), parts))
    }

    /// `v / ‖v‖₂` for a column vector.
    pub fn normalize(&mut self, v: Var) -> Result<Var> {
        let norm = l2_norm(self.value(v).data());
        if norm <= ZERO_GUARD {
            return Err(Error::ZeroNorm(norm));
        }
        let value = self.value(v).scale_real(1.0 / norm);
        Ok(self.push(value, Op::Normalize(v), &[v]))
    }

    pub fn flatten(&mut self, a: Var) -> Var {
        let value = self.value(a).flatten();
        self.push(value, Op::Flatten(a), &[a])
    }

    pub fn real_part(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let value = real_matrix(r, c, |i| src.data()[i].re);
        self.push(value, Op::RealPart(a), &[a])
    }

    pub fn imag_part(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let value = real_matrix(r, c, |i| src.data()[i].im);
        self.push(value, Op::ImagPart(a), &[a])
    }

    /// Diagonal matrix from a column vector.
    pub fn diag(&mut self, v: Var) -> Result<Var> {
        let (rows, cols) = self.shape(v);
        if cols != 1 {
            return Err(shape_err("diag", (rows, cols), (rows, 1)));
        }
        let mut value = ComplexMatrix::zeros(rows, rows);
        for i in 0..rows {
            value[(i, i)] = self.value(v)[(i, 0)];
        }
        Ok(self.push(value, Op::Diag(v), &[v]))
    }

    /// Stick-breaking eigenvalues from a column of weights in `(0,1)`;
    /// the output has as many entries as the input.
    pub fn stick_breaking(&mut self, w: Var) -> Result<Var> {
        let (rows, cols) = self.shape(w);
        if cols != 1 {
            return Err(shape_err("stick_breaking", (rows, cols), (rows, 1)));
        }
        let lambda = stick_breaking_eigenvalues(&self.value(w).re(), rows)?;
        let value = ComplexMatrix::from_real(rows, 1, &lambda);
        Ok(self.push(value, Op::StickBreaking(w), &[w]))
    }

    /// Dilation unitary of a binary channel from its blocks `B^k`.
    pub fn channel_unitary(
        &mut self,
        tensor: &Arc<TristochasticTensor>,
        blocks: &[Var],
    ) -> Result<Var> {
        let mats: Vec<&ComplexMatrix> = blocks.iter().map(|&b| self.value(b)).collect();
        let value = assemble_channel_unitary(tensor, &mats)?;
        Ok(self.push(
            value,
            Op::ChannelUnitary {
                tensor: Arc::clone(tensor),
                blocks: blocks.to_vec(),
            },
            blocks,
        ))
    }

    /// `(pred − target)²` for a 1x1 prediction.
    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        if self.shape(pred) != (1, 1) {
            return Err(shape_err("squared_error", self.shape(pred), (1, 1)));
        }
        let d = self.scalar(pred) - target;
        Ok(self.push(
            ComplexMatrix::from_real(1, 1, &[d * d]),
            Op::SquaredError { pred, target },
            &[pred],
        ))
    }

    /// Binary cross-entropy of a 1x1 probability against a 0/1 label.
    pub fn binary_cross_entropy(&mut self, pred: Var, label: f64) -> Result<Var> {
        if self.shape(pred) != (1, 1) {
            return Err(shape_err("binary_cross_entropy", self.shape(pred), (1, 1)));
        }
        let loss = crate::train::loss_bce(self.scalar(pred), label);
        Ok(self.push(
            ComplexMatrix::from_real(1, 1, &[loss]),
            Op::BinaryCrossEntropy { pred, label },
            &[pred],
        ))
    }

    /// Gradient of the real 1x1 node `output` with respect to every parameter.
    pub fn gradient(&self, output: Var) -> Result<Vec<f64>> {
        if self.shape(output) != (1, 1) {
            return Err(shape_err("gradient output", self.shape(output), (1, 1)));
        }
        let loss = self.scalar(output);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut cots: Vec<Option<ComplexMatrix>> = Vec::with_capacity(output.0 + 1);
        cots.resize_with(output.0 + 1, || None);
        cots[output.0] = Some(ComplexMatrix::from_real(1, 1, &[1.0]));

        for idx in (0..=output.0).rev() {
            let Some(bar) = cots[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(node, &bar, &mut cots, &mut grads)?;
        }
        Ok(grads)
    }

    fn acc<'a>(
        &self,
        cots: &'a mut [Option<ComplexMatrix>],
        v: Var,
    ) -> Option<&'a mut ComplexMatrix> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let (r, c) = node.value.shape();
        Some(cots[v.0].get_or_insert_with(|| ComplexMatrix::zeros(r, c)))
    }

    fn acc_add(&self, cots: &mut [Option<ComplexMatrix>], v: Var, delta: &ComplexMatrix) {
        if let Some(buf) = self.acc(cots, v) {
            buf.add_assign(delta);
        }
    }

    fn backward_node(
        &self,
        node: &Node,
        bar: &ComplexMatrix,
        cots: &mut [Option<ComplexMatrix>],
        grads: &mut [f64],
    ) -> Result<()> {
        match &node.op {
            Op::Constant => {}
            Op::Param { offset } => {
                for (g, z) in grads[*offset..*offset + bar.data().len()]
                    .iter_mut()
                    .zip(bar.data())
                {
                    *g += z.re;
                }
            }
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let d = bar.matmul(&self.value(*b).adjoint());
                    self.acc_add(cots, *a, &d);
                }
                if self.nodes[b.0].requires_grad {
                    let d = self.value(*a).adjoint().matmul(bar);
                    self.acc_add(cots, *b, &d);
                }
            }
            Op::Add(a, b) => {
                self.acc_add(cots, *a, bar);
                self.acc_add(cots, *b, bar);
            }
            Op::Sub(a, b) => {
                self.acc_add(cots, *a, bar);
                if let Some(buf) = self.acc(cots, *b) {
                    for (o, z) in buf.data_mut().iter_mut().zip(bar.data()) {
                        *o -= z;
                    }
                }
            }
            Op::AddBias(a, b) => {
                self.acc_add(cots, *a, bar);
                if let Some(buf) = self.acc(cots, *b) {
                    let (rows, cols) = bar.shape();
                    for r in 0..rows {
                        for c in 0..cols {
                            buf[(r, 0)] += bar[(r, c)];
                        }
                    }
                }
            }
            Op::Hadamard(a, b) => {
                let va = self.value(*a).data().to_vec();
                let vb = self.value(*b).data().to_vec();
                if let Some(buf) = self.acc(cots, *a) {
                    for ((o, z), y) in buf.data_mut().iter_mut().zip(bar.data()).zip(&vb) {
                        *o += z * y.conj();
                    }
                }
                if let Some(buf) = self.acc(cots, *b) {
                    for ((o, z), x) in buf.data_mut().iter_mut().zip(bar.data()).zip(&va) {
                        *o += z * x.conj();
                    }
                }
            }
            Op::Scale(a, s) => {
                let d = bar.scale(s.conj());
                self.acc_add(cots, *a, &d);
            }
            Op::Adjoint(a) => {
                let d = bar.adjoint();
                self.acc_add(cots, *a, &d);
            }
            Op::Kron(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let (ar, ac) = va.shape();
                let (br, bc) = vb.shape();
                if self.nodes[a.0].requires_grad {
                    let mut d = ComplexMatrix::zeros(ar, ac);
                    for i in 0..ar {
                        for j in 0..ac {
                            let mut s = C_ZERO;
                            for k in 0..br {
                                for l in 0..bc {
                                    s += bar[(i * br + k, j * bc + l)] * vb[(k, l)].conj();
                                }
                            }
                            d[(i, j)] = s;
                        }
                    }
                    self.acc_add(cots, *a, &d);
                }
                if self.nodes[b.0].requires_grad {
                    let mut d = ComplexMatrix::zeros(br, bc);
                    for i in 0..ar {
                        for j in 0..ac {
                            let x = va[(i, j)].conj();
                            if x == C_ZERO {
                                continue;
                            }
                            for k in 0..br {
                                for l in 0..bc {
                                    d[(k, l)] += bar[(i * br + k, j * bc + l)] * x;
                                }
                            }
                        }
                    }
                    self.acc_add(cots, *b, &d);
                }
            }
            Op::PartialTrace { src, dim_a, dim_b } => {
                if let Some(buf) = self.acc(cots, *src) {
                    for k in 0..*dim_a {
                        for kp in 0..*dim_a {
                            let z = bar[(k, kp)];
                            for i in 0..*dim_b {
                                buf[(k * dim_b + i, kp * dim_b + i)] += z;
                            }
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if let Some(buf) = self.acc(cots, *a) {
                    for ((o, z), t) in buf.data_mut().iter_mut().zip(bar.data()).zip(y.data()) {
                        o.re += z.re * (1.0 - t.re * t.re);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(buf) = self.acc(cots, *a) {
                    for ((o, z), s) in buf.data_mut().iter_mut().zip(bar.data()).zip(y.data()) {
                        o.re += z.re * s.re * (1.0 - s.re);
                    }
                }
            }
            Op::LinComb { coeffs, basis } => {
                let proj = basis.project(bar);
                if let Some(buf) = self.acc(cots, *coeffs) {
                    for (o, p) in buf.data_mut().iter_mut().zip(proj) {
                        o.re += p;
                    }
                }
            }
            Op::ExpAntiHermitian(a) => {
                let d = exp_vjp(self.value(*a), bar);
                self.acc_add(cots, *a, &d);
            }
            Op::SuStates { thetas, basis } => {
                let src = self.value(*thetas);
                let (rows, cols) = src.shape();
                let dim = basis.dim();
                let mut d = ComplexMatrix::zeros(rows, cols);
                for j in 0..cols {
                    let mut u_bar = ComplexMatrix::zeros(dim, dim);
                    let mut any = false;
                    for r in 0..dim {
                        u_bar[(r, 0)] = bar[(r, j)];
                        any |= bar[(r, j)] != C_ZERO;
                    }
                    if !any {
                        continue;
                    }
                    let theta: Vec<f64> = (0..rows).map(|m| src[(m, j)].re).collect();
                    let a = basis.combine(&theta)?;
                    let a_bar = exp_vjp(&a, &u_bar);
                    for (m, p) in basis.project(&a_bar).into_iter().enumerate() {
                        d[(m, j)] = Complex64::new(p, 0.0);
                    }
                }
                self.acc_add(cots, *thetas, &d);
            }
            Op::Column { src, index } => {
                if let Some(buf) = self.acc(cots, *src) {
                    for r in 0..bar.rows() {
                        buf[(r, *index)] += bar[(r, 0)];
                    }
                }
            }
            Op::SliceRows { src, start } => {
                if let Some(buf) = self.acc(cots, *src) {
                    for r in 0..bar.rows() {
                        for c in 0..bar.cols() {
                            buf[(start + r, c)] += bar[(r, c)];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if let Some(buf) = self.acc(cots, p) {
                        for r in 0..rows {
                            for c in 0..cols {
                                buf[(r, c)] += bar[(row + r, c)];
                            }
                        }
                    }
                    row += rows;
                }
            }
            Op::SumColumns(src) => {
                if let Some(buf) = self.acc(cots, *src) {
                    let (rows, cols) = buf.shape();
                    for r in 0..rows {
                        for c in 0..cols {
                            buf[(r, c)] += bar[(r, 0)];
                        }
                    }
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    self.acc_add(cots, p, bar);
                }
            }
            Op::Normalize(v) => {
                let y = &node.value;
                let norm = l2_norm(self.value(*v).data());
                let dot: f64 = y
                    .data()
                    .iter()
                    .zip(bar.data())
                    .map(|(a, b)| (a.conj() * b).re)
                    .sum();
                if let Some(buf) = self.acc(cots, *v) {
                    for ((o, b), a) in buf.data_mut().iter_mut().zip(bar.data()).zip(y.data()) {
                        *o += (b - a * dot) / norm;
                    }
                }
            }
            Op::Flatten(a) => {
                if let Some(buf) = self.acc(cots, *a) {
                    for (o, z) in buf.data_mut().iter_mut().zip(bar.data()) {
                        *o += z;
                    }
                }
            }
            Op::RealPart(a) => {
                if let Some(buf) = self.acc(cots, *a) {
                    for (o, z) in buf.data_mut().iter_mut().zip(bar.data()) {
                        o.re += z.re;
                    }
                }
            }
            Op::ImagPart(a) => {
                if let Some(buf) = self.acc(cots, *a) {
                    for (o, z) in buf.data_mut().iter_mut().zip(bar.data()) {
                        *o += C_I * z.re;
                    }
                }
            }
            Op::Diag(v) => {
                if let Some(buf) = self.acc(cots, *v) {
                    for i in 0..buf.rows() {
                        buf[(i, 0)] += bar[(i, i)];
                    }
                }
            }
            Op::StickBreaking(w) => {
                let w_val = self.value(*w).re();
                let lambda = node.value.re();
                let lambda_bar: Vec<f64> = bar.data().iter().map(|z| z.re).collect();
                let w_bar = stick_breaking_vjp(&w_val, &lambda, &lambda_bar);
                if let Some(buf) = self.acc(cots, *w) {
                    for (o, g) in buf.data_mut().iter_mut().zip(w_bar) {
                        o.re += g;
                    }
                }
            }
            Op::ChannelUnitary { tensor, blocks } => {
                let n = tensor.dim();
                for (k, &b) in blocks.iter().enumerate() {
                    if let Some(buf) = self.acc(cots, b) {
                        for l in 0..n {
                            for j in 0..n {
                                if !tensor.get(k, l, j) {
                                    continue;
                                }
                                for i in 0..n {
                                    buf[(i, l)] += bar[(k * n + i, l * n + j)];
                                }
                            }
                        }
                    }
                }
            }
            Op::SquaredError { pred, target } => {
                let d = 2.0 * (self.scalar(*pred) - target) * bar[(0, 0)].re;
                if let Some(buf) = self.acc(cots, *pred) {
                    buf[(0, 0)].re += d;
                }
            }
            Op::BinaryCrossEntropy { pred, label } => {
                let p = self.scalar(*pred);
                let d = if (BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&p) {
                    (p - label) / (p * (1.0 - p)) * bar[(0, 0)].re
                } else {
                    0.0
                };
                if let Some(buf) = self.acc(cots, *pred) {
                    buf[(0, 0)].re += d;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::enumerate_generators;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_exp_vjp_matches_block_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in 1..=3 {
            let basis = enumerate_generators(q);
            let n = basis.dim();
            for scale in [0.0, 1e-6, 0.3, 2.0] {
                let theta: Vec<f64> = (0..basis.len())
                    .map(|_| scale * rng.random_range(-1.0..1.0))
                    .collect();
                let a = basis.combine(&theta).unwrap();
                let bar = ComplexMatrix::from_fn(n, n, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let fast = exp_vjp(&a, &bar);
                let slow = exp_vjp_block(&a, &bar);
                assert!(
                    fast.distance(&slow) < 1e-12 * (1.0 + slow.frobenius_norm()),
                    "q={q} scale={scale}"
                );
            }
        }
        // exactly degenerate spectrum: a multiple of i·I
        let a = ComplexMatrix::identity(4).scale(Complex64::new(0.0, 0.7));
        let bar = ComplexMatrix::from_fn(4, 4, |r, c| Complex64::new(r as f64 - c as f64, 0.5));
        assert!(exp_vjp(&a, &bar).distance(&exp_vjp_block(&a, &bar)) < 1e-12);
    }
}
