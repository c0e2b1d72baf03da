//! Quantum deep sets: each element is embedded as `U(θ(x))|0…0⟩`, the set is
//! pooled by normalizing the sum of statevectors, and a classical head reads
//! the real and imaginary parts of the pooled state.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, ComplexMatrix, Statevector};
use crate::nn::{mlp_forward, Activation, Mlp, MlpSpec, NetworkSpec};
use crate::params::{ParamLayout, ParamVector};
use crate::pauli::{enumerate_generators, su_unitary, GeneratorBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdsConfig {
    pub n_qubits: usize,
    pub input_dim: usize,
    pub theta_hidden: usize,
    pub h_hidden: usize,
    pub output_dim: usize,
    pub output_activation: Activation,
}

impl QdsConfig {
    pub fn theta_spec(&self) -> MlpSpec {
        let g = (1usize << (2 * self.n_qubits)) - 1;
        MlpSpec::three_layer(self.input_dim, self.theta_hidden, g, Activation::Linear)
    }

    pub fn h_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            2 << self.n_qubits,
            self.h_hidden,
            self.output_dim,
            self.output_activation,
        )
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        layout.push("theta_net", self.theta_spec().param_count());
        layout.push("h_net", self.h_spec().param_count());
        layout
    }
}

#[derive(Clone, Debug)]
pub struct QdsModel {
    config: QdsConfig,
    basis: Arc<GeneratorBasis>,
    theta_net: Mlp,
    h_net: Mlp,
    params: ParamVector,
}

impl QdsModel {
    /// Freshly initialized model.
    pub fn new(config: QdsConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        config.theta_spec().init_into(&mut rng, &mut values);
        config.h_spec().init_into(&mut rng, &mut values);
        Self::with_params(config, values)
    }

    pub fn with_params(config: QdsConfig, values: Vec<f64>) -> Result<Self> {
        if config.n_qubits == 0 || config.input_dim == 0 {
            return Err(Error::ConfigMismatch(
                "QDS needs at least one qubit and one input".into(),
            ));
        }
        let layout = config.layout();
        let theta_net = Mlp::new(config.theta_spec(), layout.get("theta_net").unwrap().start)?;
        let h_net = Mlp::new(config.h_spec(), layout.get("h_net").unwrap().start)?;
        Ok(Self {
            basis: Arc::new(enumerate_generators(config.n_qubits)),
            params: ParamVector::new(values, layout)?,
            config,
            theta_net,
            h_net,
        })
    }

    pub fn config(&self) -> &QdsConfig {
        &self.config
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn theta_net(&self) -> &MlpSpec {
        self.theta_net.spec()
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

    /// `set` has one element per column (`input_dim x M`); returns the head output.
    pub fn forward_tape(&self, tape: &mut Tape, set: Var) -> Result<Var> {
        if tape.value(set).cols() == 0 {
            return Err(Error::EmptySet);
        }
        let thetas = self.theta_net.forward(tape, set)?;
        let states = tape.su_states(thetas, &self.basis)?;
        let pooled = tape.sum_columns(states);
        let pooled = tape.normalize(pooled)?;
        let re = tape.real_part(pooled);
        let im = tape.imag_part(pooled);
        let features = tape.concat_rows(&[re, im])?;
        self.h_net.forward(tape, features)
    }
}

/// Per-element statevector `U(θ(x))|0…0⟩`.
pub fn embed_state(model: &QdsModel, x: &[f64]) -> Result<Statevector> {
    let theta = mlp_forward(
        model.theta_net(),
        model.params.slice("theta_net").unwrap(),
        x,
    )?;
    let u = su_unitary(&model.basis, &theta)?;
    Ok(Statevector::new_unchecked(u.column(0)))
}

/// Normalized sum of the states, accumulated left to right.
pub fn average_state(states: &[Statevector]) -> Result<Statevector> {
    let (first, rest) = states.split_first().ok_or(Error::EmptySet)?;
    let mut sum = first.amplitudes().to_vec();
    for s in rest {
        if s.dim() != sum.len() {
            return Err(Error::DimensionMismatch(format!(
                "states of dimension {} and {}",
                sum.len(),
                s.dim()
            )));
        }
        for (a, b) in sum.iter_mut().zip(s.amplitudes()) {
            *a += b;
        }
    }
    l2_normalize(&sum)
}

pub fn qds_forward(model: &QdsModel, set: &[Vec<f64>]) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let states = set
        .iter()
        .map(|x| embed_state(model, x))
        .collect::<Result<Vec<_>>>()?;
    let v = average_state(&states)?;
    let mut features: Vec<f64> = v.amplitudes().iter().map(|z| z.re).collect();
    features.extend(v.amplitudes().iter().map(|z| z.im));
    mlp_forward(
        model.h_net(),
        model.params.slice("h_net").unwrap(),
        &features,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDsConfig {
    pub input_dim: usize,
    pub g_hidden: usize,
    pub embedding_dim: usize,
    pub h_hidden: usize,
    pub output_dim: usize,
    pub output_activation: Activation,
}

impl ClassicalDsConfig {
    pub fn g_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            self.input_dim,
            self.g_hidden,
            self.embedding_dim,
            Activation::Linear,
        )
    }

    pub fn h_spec(&self) -> MlpSpec {
        MlpSpec::three_layer(
            self.embedding_dim,
            self.h_hidden,
            self.output_dim,
            self.output_activation,
        )
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        layout.push("g_net", self.g_spec().param_count());
        layout.push("h_net", self.h_spec().param_count());
        layout
    }
}

/// Classical baseline `h(Σ_x g(x))`.
#[derive(Clone, Debug)]
pub struct ClassicalDeepSetsModel {
    config: ClassicalDsConfig,
    g_net: Mlp,
    h_net: Mlp,
    params: ParamVector,
}

impl ClassicalDeepSetsModel {
    pub fn new(config: ClassicalDsConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        config.g_spec().init_into(&mut rng, &mut values);
        config.h_spec().init_into(&mut rng, &mut values);
        Self::with_params(config, values)
    }

    pub fn with_params(config: ClassicalDsConfig, values: Vec<f64>) -> Result<Self> {
        let layout = config.layout();
        let g_net = Mlp::new(config.g_spec(), 0)?;
        let h_net = Mlp::new(config.h_spec(), layout.get("h_net").unwrap().start)?;
        Ok(Self {
            params: ParamVector::new(values, layout)?,
            config,
            g_net,
            h_net,
        })
    }

    pub fn config(&self) -> &ClassicalDsConfig {
        &self.config
    }

    pub fn g_net(&self) -> &MlpSpec {
        self.g_net.spec()
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

    pub fn forward_tape(&self, tape: &mut Tape, set: Var) -> Result<Var> {
        if tape.value(set).cols() == 0 {
            return Err(Error::EmptySet);
        }
        let g = self.g_net.forward(tape, set)?;
        let pooled = tape.sum_columns(g);
        self.h_net.forward(tape, pooled)
    }
}

pub fn classical_ds_forward(model: &ClassicalDeepSetsModel, set: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (first, rest) = set.split_first().ok_or(Error::EmptySet)?;
    let g_params = model.params.slice("g_net").unwrap();
    let mut pooled = mlp_forward(model.g_net(), g_params, first)?;
    for x in rest {
        for (p, v) in pooled
            .iter_mut()
            .zip(mlp_forward(model.g_net(), g_params, x)?)
        {
            *p += v;
        }
    }
    mlp_forward(model.h_net(), model.params.slice("h_net").unwrap(), &pooled)
}

/// Elements as the columns of an `input_dim x M` real matrix.
pub fn elements_to_matrix(elements: &[Vec<f64>]) -> Result<ComplexMatrix> {
    let d = elements.first().map_or(0, Vec::len);
    if elements.iter().any(|x| x.len() != d) {
        return Err(Error::ShapeMismatch(
            "elements have different lengths".into(),
        ));
    }
    Ok(ComplexMatrix::from_fn(d, elements.len(), |r, c| {
        Complex64::new(elements[c][r], 0.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn config(n_qubits: usize) -> QdsConfig {
        QdsConfig {
            n_qubits,
            input_dim: 2,
            theta_hidden: 8,
            h_hidden: 10,
            output_dim: 1,
            output_activation: Activation::Linear,
        }
    }

    fn random_set(rng: &mut ChaCha8Rng, size: usize) -> Vec<Vec<f64>> {
        (0..size)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect()
    }

    fn tape_forward(model: &QdsModel, set: &[Vec<f64>]) -> f64 {
        let mut tape = Tape::new(model.params().values());
        let x = tape.constant(elements_to_matrix(set).unwrap());
        let out = model.forward_tape(&mut tape, x).unwrap();
        tape.scalar(out)
    }

    #[test]
    fn zero_theta_net_embeds_ground_state() {
        let mut model = QdsModel::new(config(2), 1).unwrap();
        model.params_mut().slice_mut("theta_net").unwrap().fill(0.0);
        let s = embed_state(&model, &[0.3, -0.8]).unwrap();
        assert_eq!(s, Statevector::basis(4, 0));
    }

    #[test]
    fn forced_x_rotation() {
        // output bias (π/2, 0, 0) with zero weights gives θ = (π/2,0,0)
        let mut model = QdsModel::new(config(1), 1).unwrap();
        let theta = model.params_mut().slice_mut("theta_net").unwrap();
        theta.fill(0.0);
        let n = theta.len();
        theta[n - 3] = std::f64::consts::FRAC_PI_2;
        let s = embed_state(&model, &[1.0, 2.0]).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-15);
        assert!((s.amplitudes()[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn embeddings_have_unit_norm() {
        let model = QdsModel::new(config(2), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for x in random_set(&mut rng, 100) {
            assert!((embed_state(&model, &x).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn average_examples() {
        let zero = Statevector::basis(2, 0);
        let one = Statevector::basis(2, 1);
        assert_eq!(average_state(std::slice::from_ref(&zero)).unwrap(), zero);
        let plus = average_state(&[zero.clone(), one]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(
            (plus.amplitudes()[0].re - h).abs() < 1e-15
                && (plus.amplitudes()[1].re - h).abs() < 1e-15
        );
        let minus =
            Statevector::new(vec![Complex64::new(-1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert!(matches!(
            average_state(&[zero, minus]),
            Err(Error::ZeroNorm(_))
        ));
        assert!(matches!(average_state(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = QdsModel::new(config(2), 10).unwrap();
        let cds = ClassicalDeepSetsModel::new(
            ClassicalDsConfig {
                input_dim: 2,
                g_hidden: 6,
                embedding_dim: 4,
                h_hidden: 6,
                output_dim: 1,
                output_activation: Activation::Linear,
            },
            10,
        )
        .unwrap();
        for size in [2, 5, 20] {
            let mut set = random_set(&mut rng, size);
            let q0 = qds_forward(&model, &set).unwrap()[0];
            let c0 = classical_ds_forward(&cds, &set).unwrap()[0];
            for _ in 0..10 {
                set.shuffle(&mut rng);
                assert!((qds_forward(&model, &set).unwrap()[0] - q0).abs() <= 1e-10);
                assert!((classical_ds_forward(&cds, &set).unwrap()[0] - c0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn duplicates_leave_qds_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = QdsModel::new(config(1), 2).unwrap();
        let set = random_set(&mut rng, 4);
        let base = qds_forward(&model, &set).unwrap()[0];
        let single = qds_forward(&model, &set[..1]).unwrap()[0];
        let pair = qds_forward(&model, &[set[0].clone(), set[0].clone()]).unwrap()[0];
        assert!((single - pair).abs() < 1e-10);
        for k in [2, 3] {
            let rep: Vec<Vec<f64>> = set
                .iter()
                .flat_map(|x| std::iter::repeat_n(x.clone(), k))
                .collect();
            assert!((qds_forward(&model, &rep).unwrap()[0] - base).abs() < 1e-10);
        }
    }

    #[test]
    fn classical_duplicates_double_the_pool() {
        let model = ClassicalDeepSetsModel::new(
            ClassicalDsConfig {
                input_dim: 1,
                g_hidden: 3,
                embedding_dim: 2,
                h_hidden: 2,
                output_dim: 1,
                output_activation: Activation::Linear,
            },
            3,
        )
        .unwrap();
        // identity head on a 2-d embedding exposes the pooled vector
        let identity_head = MlpSpec {
            layer_widths: vec![2, 2],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        };
        let g = mlp_forward(
            model.g_net(),
            model.params().slice("g_net").unwrap(),
            &[0.7],
        )
        .unwrap();
        let doubled: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let pooled =
            mlp_forward(&identity_head, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &doubled).unwrap();
        assert_eq!(pooled, doubled);
        let expected = mlp_forward(
            model.h_net(),
            model.params().slice("h_net").unwrap(),
            &doubled,
        )
        .unwrap();
        let got = classical_ds_forward(&model, &[vec![0.7], vec![0.7]]).unwrap();
        assert!((got[0] - expected[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_g_net_gives_constant() {
        let mut model = ClassicalDeepSetsModel::new(
            ClassicalDsConfig {
                input_dim: 2,
                g_hidden: 4,
                embedding_dim: 3,
                h_hidden: 4,
                output_dim: 1,
                output_activation: Activation::Linear,
            },
            5,
        )
        .unwrap();
        model.params_mut().slice_mut("g_net").unwrap().fill(0.0);
        let h0 = mlp_forward(
            model.h_net(),
            model.params().slice("h_net").unwrap(),
            &[0.0; 3],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for size in [1, 3, 9] {
            assert_eq!(
                classical_ds_forward(&model, &random_set(&mut rng, size)).unwrap(),
                h0
            );
        }
    }

    /// Composition written with explicit 1-qubit gates for n = 1: the θ-net
    /// and head are evaluated by hand and `exp(θ·G)` in closed form.
    #[test]
    fn composition_oracle() {
        let model = QdsModel::new(config(1), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = random_set(&mut rng, 6);
        let p = model.params().values();
        let dense = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..b.len())
                .map(|r| (0..x.len()).map(|c| w[r * x.len() + c] * x[c]).sum::<f64>() + b[r])
                .collect()
        };
        let mut sum = [Complex64::new(0.0, 0.0); 2];
        for x in &set {
            let h: Vec<f64> = dense(&p[0..16], &p[16..24], x)
                .into_iter()
                .map(f64::tanh)
                .collect();
            let t = dense(&p[24..48], &p[48..51], &h);
            // exp(i(t·σ)) = cos|t| I + i sin|t| (t̂·σ)
            let r = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
            let (c, s) = (r.cos(), r.sin() / r);
            let i = Complex64::new(0.0, 1.0);
            // first column of the 2x2 matrix: (c + i s t_z, i s (t_x + i t_y))
            sum[0] += c + i * s * t[2];
            sum[1] += i * s * Complex64::new(t[0], t[1]);
        }
        let norm = (sum[0].norm_sqr() + sum[1].norm_sqr()).sqrt();
        let feats = [
            sum[0].re / norm,
            sum[1].re / norm,
            sum[0].im / norm,
            sum[1].im / norm,
        ];
        let hh: Vec<f64> = dense(&p[51..91], &p[91..101], &feats)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let expected = dense(&p[101..111], &p[111..112], &hh)[0];
        assert_eq!(p.len(), 112);
        assert!((qds_forward(&model, &set).unwrap()[0] - expected).abs() < 1e-12);
        assert!((tape_forward(&model, &set) - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_rejected() {
        let model = QdsModel::new(config(1), 0).unwrap();
        assert!(matches!(qds_forward(&model, &[]), Err(Error::EmptySet)));
        let mut tape = Tape::new(model.params().values());
        let x = tape.constant(ComplexMatrix::zeros(2, 0));
        assert!(matches!(
            model.forward_tape(&mut tape, x),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn pipeline_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [1, 2] {
            let model = QdsModel::new(config(n), 31).unwrap();
            let set = elements_to_matrix(&random_set(&mut rng, 7)).unwrap();
            let report = grad_check(
                |t| {
                    let x = t.constant(set.clone());
                    let y = model.forward_tape(t, x)?;
                    t.squared_error(y, 0.4)
                },
                model.params().values(),
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "n={n}: {:?}", report.failures);
        }
    }
}
