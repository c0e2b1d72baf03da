use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tensor::{validate_tensor, TristochasticTensor};
use crate::error::{Error, Result};
use crate::linalg::{kron, partial_trace_second, ComplexMatrix, DensityMatrix};
use crate::pauli::{enumerate_generators, su_unitary, GeneratorBasis};

/// Eigenvalues `λ_1..λ_N` built from the first `N−1` weights in `(0,1)`:
/// `λ_k = (1 − w_k^{1/(N−k)})·(1 − Σ_{i<k} λ_i)`, with `λ_N` the remainder.
pub fn stick_breaking_eigenvalues(w: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::DimensionMismatch(
            "stick-breaking needs N ≥ 1".into(),
        ));
    }
    if w.len() + 1 < n {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            got: w.len(),
        });
    }
    let mut lambda = Vec::with_capacity(n);
    let mut remaining = 1.0;
    let mut assigned = 0.0;
    for (k, &wk) in w.iter().take(n - 1).enumerate() {
        if !(wk > 0.0 && wk < 1.0) {
            return Err(Error::DomainError {
                index: k,
                value: wk,
            });
        }
        let p = wk.powf(1.0 / (n - 1 - k) as f64);
        let l = (1.0 - p) * remaining;
        remaining *= p;
        assigned += l;
        lambda.push(l);
    }
    lambda.push(1.0 - assigned);
    Ok(lambda)
}

/// Vector-Jacobian product of [`stick_breaking_eigenvalues`]. Uses the
/// product form `λ_k = (1 − p_k) Π_{i<k} p_i`, `λ_N = Π_{i<N} p_i`.
pub(crate) fn stick_breaking_vjp(w: &[f64], lambda: &[f64], lambda_bar: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut out = vec![0.0; w.len()];
    let mut prefix = 1.0;
    for i in 0..n.saturating_sub(1) {
        let e = 1.0 / (n - 1 - i) as f64;
        let p = w[i].powf(e);
        let tail: f64 = (i + 1..n).map(|k| lambda_bar[k] * lambda[k]).sum();
        // dp/dw = e·p/w; dλ_i/dp = −R_i; dλ_k/dp = λ_k/p for k > i
        out[i] = e / w[i] * (tail - lambda_bar[i] * prefix * p);
        prefix *= p;
    }
    out
}

/// `V[(kN+i),(lN+j)] = T[k,l,j]·B^k[i,l]`.
pub fn assemble_channel_unitary(
    tensor: &TristochasticTensor,
    blocks: &[&ComplexMatrix],
) -> Result<ComplexMatrix> {
    let n = tensor.dim();
    if let Err(v) = validate_tensor(tensor) {
        return Err(Error::InvalidTensor(v.to_string()));
    }
    if blocks.len() != n || blocks.iter().any(|b| b.shape() != (n, n)) {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} blocks of size {n}x{n}"
        )));
    }
    let nn = n * n;
    let mut v = ComplexMatrix::zeros(nn, nn);
    for (k, b) in blocks.iter().enumerate() {
        for l in 0..n {
            for j in 0..n {
                if tensor.get(k, l, j) {
                    for i in 0..n {
                        v[(k * n + i, l * n + j)] = b[(i, l)];
                    }
                }
            }
        }
    }
    Ok(v)
}

/// Binary channel parameters: a tensor and one angle vector per block.
/// `b_angles[0]` is ignored since `B^1` is fixed to the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub n_qubits: usize,
    pub tensor: Arc<TristochasticTensor>,
    pub b_angles: Vec<Vec<f64>>,
    /// All blocks are the identity when set.
    #[serde(default)]
    pub frozen: bool,
}

impl ChannelSpec {
    /// Default tensor, every block the identity.
    pub fn identity(n_qubits: usize) -> Self {
        let n = 1 << n_qubits;
        Self {
            n_qubits,
            tensor: Arc::new(super::default_tensor(n)),
            b_angles: vec![vec![0.0; n * n - 1]; n],
            frozen: false,
        }
    }

    /// Default tensor with standard-normal block angles scaled by `scale`.
    pub fn random(n_qubits: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut spec = Self::identity(n_qubits);
        for angles in spec.b_angles.iter_mut().skip(1) {
            for a in angles.iter_mut() {
                *a = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        spec
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn blocks(&self, basis: &GeneratorBasis) -> Result<Vec<ComplexMatrix>> {
        let n = self.dim();
        if self.b_angles.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.b_angles.len(),
            });
        }
        self.b_angles
            .iter()
            .enumerate()
            .map(|(k, angles)| {
                if k == 0 || self.frozen {
                    Ok(ComplexMatrix::identity(n))
                } else {
                    su_unitary(basis, angles)
                }
            })
            .collect()
    }
}

pub fn build_channel_unitary(spec: &ChannelSpec) -> Result<ComplexMatrix> {
    if spec.tensor.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "tensor dimension {} for {} qubits",
            spec.tensor.dim(),
            spec.n_qubits
        )));
    }
    let basis = enumerate_generators(spec.n_qubits);
    let blocks = spec.blocks(&basis)?;
    let refs: Vec<&ComplexMatrix> = blocks.iter().collect();
    assemble_channel_unitary(&spec.tensor, &refs)
}

/// `ρ ∘ σ = Tr₂[V(ρ⊗σ)V†]`.
pub fn channel_product(
    v: &ComplexMatrix,
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
) -> Result<DensityMatrix> {
    let n = rho.dim();
    if sigma.dim() != n || v.shape() != (n * n, n * n) {
        return Err(Error::DimensionMismatch(format!(
            "channel of size {}x{} with states of dimension {} and {}",
            v.rows(),
            v.cols(),
            n,
            sigma.dim()
        )));
    }
    let joint = kron(rho.matrix(), sigma.matrix());
    let out = v.matmul(&joint).matmul(&v.adjoint());
    Ok(DensityMatrix::new_unchecked(partial_trace_second(
        &out, n, n,
    )?))
}

/// Left fold `((ρ₁∘ρ₂)∘ρ₃)∘…`.
pub fn fold_sequence(v: &ComplexMatrix, densities: &[DensityMatrix]) -> Result<DensityMatrix> {
    let (first, rest) = densities.split_first().ok_or(Error::EmptySequence)?;
    let mut acc = first.clone();
    for rho in rest {
        acc = channel_product(v, &acc, rho)?;
    }
    Ok(acc)
}

/// A map taking two states to one.
pub trait BinaryChannel {
    fn dim(&self) -> usize;
    fn apply(&self, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<DensityMatrix>;
}

/// Channel given by its dilation unitary `V`.
#[derive(Clone, Debug)]
pub struct DilationChannel {
    v: ComplexMatrix,
    n: usize,
}

impl DilationChannel {
    pub fn new(v: ComplexMatrix) -> Result<Self> {
        let n = (v.rows() as f64).sqrt().round() as usize;
        if !v.is_square() || n * n != v.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} is not a dilation unitary shape",
                v.rows(),
                v.cols()
            )));
        }
        Ok(Self { v, n })
    }

    pub fn from_spec(spec: &ChannelSpec) -> Result<Self> {
        Self::new(build_channel_unitary(spec)?)
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.v
    }
}

impl BinaryChannel for DilationChannel {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<DensityMatrix> {
        channel_product(&self.v, rho, sigma)
    }
}

/// The same channel with its arguments exchanged.
#[derive(Clone, Debug)]
pub struct Swapped<C>(pub C);

impl<C: BinaryChannel> BinaryChannel for Swapped<C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<DensityMatrix> {
        self.0.apply(sigma, rho)
    }
}

/// Random mixed state `GG†/tr(GG†)` with `G` complex Ginibre.
pub fn random_density(n: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    let mut m = m.scale_real(1.0 / tr);
    // exact Hermitian symmetry
    for r in 0..n {
        m[(r, r)].im = 0.0;
        for c in r + 1..n {
            m[(c, r)] = m[(r, c)].conj();
        }
    }
    DensityMatrix::new_unchecked(m)
}

/// Mean `‖ρ∘σ − σ∘ρ‖_F` over random state pairs.
pub fn commutativity_defect<C: BinaryChannel>(
    channel: &C,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    assert!(samples >= 1, "at least one sample is required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = channel.dim();
    let mut total = 0.0;
    for _ in 0..samples {
        let rho = random_density(n, &mut rng);
        let sigma = random_density(n, &mut rng);
        let a = channel.apply(&rho, &sigma)?;
        let b = channel.apply(&sigma, &rho)?;
        total += a.matrix().distance(b.matrix());
    }
    Ok(total / samples as f64)
}

/// Mean `‖(ρ∘σ)∘τ − ρ∘(σ∘τ)‖_F` over random state triples.
pub fn associativity_defect<C: BinaryChannel>(
    channel: &C,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    assert!(samples >= 1, "at least one sample is required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = channel.dim();
    let mut total = 0.0;
    for _ in 0..samples {
        let rho = random_density(n, &mut rng);
        let sigma = random_density(n, &mut rng);
        let tau = random_density(n, &mut rng);
        let left = channel.apply(&channel.apply(&rho, &sigma)?, &tau)?;
        let right = channel.apply(&rho, &channel.apply(&sigma, &tau)?)?;
        total += left.matrix().distance(right.matrix());
    }
    Ok(total / samples as f64)
}
