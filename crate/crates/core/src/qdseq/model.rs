use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::{
    build_channel_unitary, fold_sequence, stick_breaking_eigenvalues, ChannelSpec,
};
use super::tensor::{default_tensor, validate_tensor, TristochasticTensor};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, DensityMatrix};
use crate::nn::{mlp_forward, Activation, Mlp, MlpSpec, NetworkSpec};
use crate::params::{ParamLayout, ParamVector};
use crate::pauli::{enumerate_generators, su_unitary, GeneratorBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdseqConfig {
    pub n_qubits: usize,
    pub input_dim: usize,
    pub theta_hidden: usize,
    pub w_hidden: usize,
    pub h_hidden: usize,
    pub output_dim: usize,
    /// Keep every channel block at the identity and drop its parameters.
    #[serde(default)]
    pub freeze_channel: bool,
    /// Cyclic-group tensor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<TristochasticTensor>,
}

impl QdseqConfig {
    /// Uniform hidden width for the θ-, w- and h-networks, scalar inputs and a
    /// single sigmoid output.
    pub fn classifier(n_qubits: usize, hidden: usize) -> Self {
        Self {
            n_qubits,
            input_dim: 1,
            theta_hidden: hidden,
            w_hidden: hidden,
            h_hidden: hidden,
            output_dim: 1,
            freeze_channel: false,
            tensor: None,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    fn generators(&self) -> usize {
        self.dim() * self.dim() - 1
    }

    pub fn theta_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            self.input_dim,
            self.theta_hidden,
            self.generators(),
            Activation::Linear,
        )
    }

    pub fn w_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            self.input_dim,
            self.w_hidden,
            self.dim(),
            Activation::UnitIntervalVector,
        )
    }

    pub fn h_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            2 * self.dim() * self.dim(),
            self.h_hidden,
            self.output_dim,
            Activation::Sigmoid,
        )
    }

    /// Trainable block angles: one vector per block after the first.
    pub fn b_angle_count(&self) -> usize {
        if self.freeze_channel {
            0
        } else {
            (self.dim() - 1) * self.generators()
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        layout.push("theta_net", self.theta_spec().param_count());
        layout.push("w_net", self.w_spec().param_count());
        layout.push("b_angles", self.b_angle_count());
        layout.push("h_net", self.h_spec().param_count());
        layout
    }

    pub fn tensor(&self) -> TristochasticTensor {
        self.tensor
            .clone()
            .unwrap_or_else(|| default_tensor(self.dim()))
    }
}

#[derive(Clone, Debug)]
pub struct QdseqModel {
    config: QdseqConfig,
    basis: Arc<GeneratorBasis>,
    tensor: Arc<TristochasticTensor>,
    theta_net: Mlp,
    w_net: Mlp,
    h_net: Mlp,
    b_offset: usize,
    params: ParamVector,
}

impl QdseqModel {
    /// Glorot-initialized networks; block angles start at zero so the channel
    /// begins as the classical tensor product.
    pub fn new(config: QdseqConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        config.theta_spec().init_into(&mut rng, &mut values);
        config.w_spec().init_into(&mut rng, &mut values);
        values.extend(std::iter::repeat_n(0.0, config.b_angle_count()));
        config.h_spec().init_into(&mut rng, &mut values);
        Self::with_params(config, values)
    }

    pub fn with_params(config: QdseqConfig, values: Vec<f64>) -> Result<Self> {
        if config.n_qubits == 0 || config.input_dim == 0 {
            return Err(Error::ConfigMismatch(
                "QDSeq needs at least one qubit and one input".into(),
            ));
        }
        let tensor = config.tensor();
        if tensor.dim() != config.dim() {
            return Err(Error::InvalidTensor(format!(
                "tensor dimension {} for {} qubits",
                tensor.dim(),
                config.n_qubits
            )));
        }
        if let Err(v) = validate_tensor(&tensor) {
            return Err(Error::InvalidTensor(v.to_string()));
        }
        let layout = config.layout();
        let start = |name: &str| layout.get(name).unwrap().start;
        Ok(Self {
            basis: Arc::new(enumerate_generators(config.n_qubits)),
            tensor: Arc::new(tensor),
            theta_net: Mlp::new(config.theta_spec(), start("theta_net"))?,
            w_net: Mlp::new(config.w_spec(), start("w_net"))?,
            h_net: Mlp::new(config.h_spec(), start("h_net"))?,
            b_offset: start("b_angles"),
            params: ParamVector::new(values, layout)?,
            config,
        })
    }

    pub fn config(&self) -> &QdseqConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn tensor(&self) -> &TristochasticTensor {
        &self.tensor
    }

    pub fn theta_net(&self) -> &MlpSpec {
        self.theta_net.spec()
    }

    pub fn w_net(&self) -> &MlpSpec {
        self.w_net.spec()
    }

    pub fn h_net(&self) -> &MlpSpec {
        self.h_net.spec()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Current channel; the first block's angles are zeros.
    pub fn channel_spec(&self) -> ChannelSpec {
        let n = self.dim();
        let g = self.basis.len();
        let stored = self.params.slice("b_angles").unwrap();
        let b_angles = (0..n)
            .map(|k| {
                if k == 0 || self.config.freeze_channel {
                    vec![0.0; g]
                } else {
                    stored[(k - 1) * g..k * g].to_vec()
                }
            })
            .collect();
        ChannelSpec {
            n_qubits: self.config.n_qubits,
            tensor: Arc::clone(&self.tensor),
            b_angles,
            frozen: self.config.freeze_channel,
        }
    }

    /// `sequence` is `input_dim x S`, elements in reading order.
    pub fn forward_tape(&self, tape: &mut Tape, sequence: Var) -> Result<Var> {
        let steps = tape.value(sequence).cols();
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        let n = self.dim();
        let g = self.basis.len();
        let thetas = self.theta_net.forward(tape, sequence)?;
        let weights = self.w_net.forward(tape, sequence)?;

        let mut densities = Vec::with_capacity(steps);
        for t in 0..steps {
            let theta = tape.column(thetas, t)?;
            let a = tape.lin_comb(theta, &self.basis)?;
            let u = tape.exp_anti_hermitian(a)?;
            let w = tape.column(weights, t)?;
            let lambda = tape.stick_breaking(w)?;
            let d = tape.diag(lambda)?;
            let ud = tape.matmul(u, d)?;
            let u_adj = tape.adjoint(u);
            densities.push(tape.matmul(ud, u_adj)?);
        }

        let mut acc = densities[0];
        if steps > 1 {
            let mut blocks = vec![tape.constant(ComplexMatrix::identity(n))];
            for k in 1..n {
                if self.config.freeze_channel {
                    blocks.push(blocks[0]);
                } else {
                    let angles = tape.param(self.b_offset + (k - 1) * g, g, 1)?;
                    let gen = tape.lin_comb(angles, &self.basis)?;
                    blocks.push(tape.exp_anti_hermitian(gen)?);
                }
            }
            let v = tape.channel_unitary(&self.tensor, &blocks)?;
            let v_adj = tape.adjoint(v);
            for &rho in &densities[1..] {
                let joint = tape.kron(acc, rho);
                let left = tape.matmul(v, joint)?;
                let full = tape.matmul(left, v_adj)?;
                acc = tape.partial_trace_second(full, n, n)?;
            }
        }

        let flat = tape.flatten(acc);
        let re = tape.real_part(flat);
        let im = tape.imag_part(flat);
        let features = tape.concat_rows(&[re, im])?;
        self.h_net.forward(tape, features)
    }
}

/// `ρ(x) = U(θ(x)) diag(λ(w(x))) U(θ(x))†`.
pub fn embed_density(model: &QdseqModel, x: &[f64]) -> Result<DensityMatrix> {
    let theta = mlp_forward(
        model.theta_net(),
        model.params.slice("theta_net").unwrap(),
        x,
    )?;
    let w = mlp_forward(model.w_net(), model.params.slice("w_net").unwrap(), x)?;
    let lambda = stick_breaking_eigenvalues(&w, model.dim())?;
    let u = su_unitary(&model.basis, &theta)?;
    let rho = u
        .matmul(&ComplexMatrix::diag_real(&lambda))
        .matmul(&u.adjoint());
    Ok(DensityMatrix::new_unchecked(rho))
}

/// Row-major `re ∥ im` features of a density matrix.
pub fn density_features(rho: &DensityMatrix) -> Vec<f64> {
    let data = rho.matrix().data();
    data.iter()
        .map(|z| z.re)
        .chain(data.iter().map(|z| z.im))
        .collect()
}

pub fn qdseq_forward(model: &QdseqModel, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    let densities = sequence
        .iter()
        .map(|x| embed_density(model, x))
        .collect::<Result<Vec<_>>>()?;
    let v = build_channel_unitary(&model.channel_spec())?;
    let rho = fold_sequence(&v, &densities)?;
    mlp_forward(
        model.h_net(),
        model.params.slice("h_net").unwrap(),
        &density_features(&rho),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::qds::elements_to_matrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn model(n_qubits: usize, seed: u64) -> QdseqModel {
        let mut m = QdseqModel::new(QdseqConfig::classifier(n_qubits, 6), seed).unwrap();
        // non-trivial channel
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in m.params_mut().slice_mut("b_angles").unwrap() {
            *a = rng.random_range(-1.0..1.0);
        }
        m
    }

    fn seq(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn tape_forward(m: &QdseqModel, s: &[Vec<f64>]) -> f64 {
        let mut tape = Tape::new(m.params().values());
        let x = tape.constant(elements_to_matrix(s).unwrap());
        let out = m.forward_tape(&mut tape, x).unwrap();
        tape.scalar(out)
    }

    #[test]
    fn parameter_counts_for_the_comparison_configs() {
        let one = QdseqConfig::classifier(1, 34).layout().len();
        let two = QdseqConfig::classifier(2, 34).layout().len();
        assert_eq!(one, 655);
        assert_eq!(two, 2003);
        assert!((one as f64 / 653.0 - 1.0).abs() <= 0.1);
        assert!((two as f64 / 1979.0 - 1.0).abs() <= 0.1);
    }

    #[test]
    fn pure_ground_state_embedding() {
        // zero θ-net and a w-net saturated towards 0 give λ ≈ (1, 0)
        let mut m = model(1, 1);
        m.params_mut().slice_mut("theta_net").unwrap().fill(0.0);
        let w = m.params_mut().slice_mut("w_net").unwrap();
        w.fill(0.0);
        let n = w.len();
        w[n - 2] = -40.0;
        let rho = embed_density(&m, &[0.3]).unwrap();
        let ground = crate::linalg::Statevector::basis(2, 0).projector();
        assert!(rho.matrix().distance(ground.matrix()) < 1e-15);
    }

    #[test]
    fn half_weight_is_maximally_mixed() {
        let mut m = model(1, 2);
        let w = m.params_mut().slice_mut("w_net").unwrap();
        w.fill(0.0);
        for x in [-1.0, 0.2, 3.0] {
            let rho = embed_density(&m, &[x]).unwrap();
            assert!(
                rho.matrix()
                    .distance(DensityMatrix::maximally_mixed(2).matrix())
                    < 1e-15
            );
        }
    }

    #[test]
    fn spectrum_equals_stick_breaking() {
        let m = model(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = [rng.random_range(0.0..1.0)];
            let rho = embed_density(&m, &x).unwrap();
            let w = mlp_forward(m.w_net(), m.params().slice("w_net").unwrap(), &x).unwrap();
            let mut lambda = stick_breaking_eigenvalues(&w, 4).unwrap();
            lambda.sort_by(f64::total_cmp);
            let (eig, _) = rho.matrix().hermitian_eigen();
            for (a, b) in eig.iter().zip(&lambda) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_element_base_case() {
        let m = model(1, 4);
        let rho = embed_density(&m, &[0.45]).unwrap();
        let expected = mlp_forward(
            m.h_net(),
            m.params().slice("h_net").unwrap(),
            &density_features(&rho),
        )
        .unwrap();
        assert_eq!(qdseq_forward(&m, &seq(&[0.45])).unwrap(), expected);
        assert!(matches!(qdseq_forward(&m, &[]), Err(Error::EmptySequence)));
    }

    /// Independent composition for n = 1: densities from the closed-form SU(2)
    /// exponential, the channel product evaluated entry by entry.
    #[test]
    fn composition_oracle() {
        let m = model(1, 5);
        let values = [0.1, 0.8, 0.35, 0.6];
        let p = m.params().values();
        let dense = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..b.len())
                .map(|r| (0..x.len()).map(|c| w[r * x.len() + c] * x[c]).sum::<f64>() + b[r])
                .collect()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = Complex64::new(0.0, 1.0);
        let su2 = |t: &[f64]| -> [[Complex64; 2]; 2] {
            let r = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
            let (c, s) = (r.cos(), r.sin() / r);
            [
                [c + i * s * t[2], i * s * Complex64::new(t[0], -t[1])],
                [i * s * Complex64::new(t[0], t[1]), c - i * s * t[2]],
            ]
        };
        // layout for width 6: θ 1→6→3 (12 + 21), w 1→6→2 (12 + 14), b 3, h 8→6→1 (54 + 7)
        let density = |x: f64| -> [[Complex64; 2]; 2] {
            let h: Vec<f64> = dense(&p[0..6], &p[6..12], &[x])
                .into_iter()
                .map(f64::tanh)
                .collect();
            let t = dense(&p[12..30], &p[30..33], &h);
            let hw: Vec<f64> = dense(&p[33..39], &p[39..45], &[x])
                .into_iter()
                .map(f64::tanh)
                .collect();
            let w: Vec<f64> = dense(&p[45..57], &p[57..59], &hw)
                .into_iter()
                .map(sig)
                .collect();
            let lam = [1.0 - w[0], w[0]];
            let u = su2(&t);
            let mut rho = [[Complex64::new(0.0, 0.0); 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for (k, l) in lam.iter().enumerate() {
                        rho[a][b] += u[a][k] * l * u[b][k].conj();
                    }
                }
            }
            rho
        };
        let b1 = su2(&p[59..62]);
        // V[(k,i),(l,j)] = [k == l ^ j] B^k[i][l]
        let vmat = |row: usize, col: usize| -> Complex64 {
            let (k, ii) = (row / 2, row % 2);
            let (l, j) = (col / 2, col % 2);
            if k != l ^ j {
                return Complex64::new(0.0, 0.0);
            }
            if k == 0 {
                if ii == l {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                b1[ii][l]
            }
        };
        let product = |r: &[[Complex64; 2]; 2], s: &[[Complex64; 2]; 2]| -> [[Complex64; 2]; 2] {
            let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for e in 0..2 {
                        for p1 in 0..4 {
                            for q1 in 0..4 {
                                let joint = r[p1 / 2][q1 / 2] * s[p1 % 2][q1 % 2];
                                out[a][b] +=
                                    vmat(a * 2 + e, p1) * joint * vmat(b * 2 + e, q1).conj();
                            }
                        }
                    }
                }
            }
            out
        };
        let mut acc = density(values[0]);
        for &x in &values[1..] {
            acc = product(&acc, &density(x));
        }
        let feats: Vec<f64> = acc
            .iter()
            .flatten()
            .map(|z| z.re)
            .chain(acc.iter().flatten().map(|z| z.im))
            .collect();
        let hh: Vec<f64> = dense(&p[62..110], &p[110..116], &feats)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let expected = sig(dense(&p[116..122], &p[122..123], &hh)[0]);
        assert_eq!(p.len(), 123);
        assert!((qdseq_forward(&m, &seq(&values)).unwrap()[0] - expected).abs() < 1e-12);
        assert!((tape_forward(&m, &seq(&values)) - expected).abs() < 1e-12);
    }

    #[test]
    fn output_is_a_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for q in [1, 2] {
            let m = model(q, 6);
            for _ in 0..5 {
                let len = rng.random_range(1..12);
                let s: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                let p = qdseq_forward(&m, &seq(&s)).unwrap()[0];
                assert!(p > 0.0 && p < 1.0);
                assert!((tape_forward(&m, &seq(&s)) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_matters() {
        let m = model(1, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_diff: f64 = 0.0;
        for _ in 0..20 {
            let a = rng.random_range(0.0..1.0);
            let b = rng.random_range(0.0..1.0);
            let ab = qdseq_forward(&m, &seq(&[a, b])).unwrap()[0];
            let ba = qdseq_forward(&m, &seq(&[b, a])).unwrap()[0];
            max_diff = max_diff.max((ab - ba).abs());
        }
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn frozen_channel_has_no_block_parameters() {
        let mut cfg = QdseqConfig::classifier(1, 6);
        cfg.freeze_channel = true;
        let m = QdseqModel::new(cfg, 0).unwrap();
        assert_eq!(m.params().slice("b_angles").unwrap().len(), 0);
        let spec = m.channel_spec();
        let v = build_channel_unitary(&spec).unwrap();
        assert_eq!(v, build_channel_unitary(&ChannelSpec::identity(1)).unwrap());
        let s = seq(&[0.2, 0.4, 0.9]);
        assert!((qdseq_forward(&m, &s).unwrap()[0] - tape_forward(&m, &s)).abs() < 1e-12);
    }

    #[test]
    fn pipeline_gradients() {
        let m = model(1, 8);
        let s = elements_to_matrix(&seq(&[0.3, 0.1, 0.75, 0.5])).unwrap();
        let report = grad_check(
            |t| {
                let x = t.constant(s.clone());
                let p = m.forward_tape(t, x)?;
                t.binary_cross_entropy(p, 1.0)
            },
            m.params().values(),
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.failures);
    }
}
