//! Fully connected networks and an LSTM baseline on top of the tape.
//!
//! Networks operate on column batches: an input of shape `in x B` maps to an
//! output of shape `out x B`, one sample per column.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
    /// Elementwise sigmoid; every output lies in the open unit interval.
    UnitIntervalVector,
}

impl Activation {
    fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Linear => v,
            Activation::Tanh => tape.tanh(v),
            Activation::Sigmoid | Activation::UnitIntervalVector => tape.sigmoid(v),
        }
    }
}

/// Trainable network shape: knows its parameter count and initialization.
pub trait NetworkSpec {
    fn param_count(&self) -> usize;

    /// Appends freshly initialized parameters in layout order.
    fn init_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>);
}

/// Glorot-uniform weights, zero biases; deterministic given `seed`.
pub fn init_params<S: NetworkSpec>(spec: &S, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.param_count());
    spec.init_into(&mut rng, &mut out);
    out
}

pub fn count_params<S: NetworkSpec>(spec: &S) -> usize {
    spec.param_count()
}

pub(crate) fn glorot_uniform(
    rng: &mut ChaCha8Rng,
    fan_in: usize,
    fan_out: usize,
    count: usize,
    out: &mut Vec<f64>,
) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    out.extend((0..count).map(|_| rng.random_range(-limit..limit)));
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// Input, one tanh hidden layer, output.
    pub fn three_layer(
        input: usize,
        hidden: usize,
        output: usize,
        output_activation: Activation,
    ) -> Self {
        Self {
            layer_widths: vec![input, hidden, output],
            hidden_activation: Activation::Tanh,
            output_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 || self.layer_widths.contains(&0) {
            return Err(Error::ConfigMismatch(format!(
                "invalid layer widths {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

impl NetworkSpec for MlpSpec {
    fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn init_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        for w in self.layer_widths.windows(2) {
            glorot_uniform(rng, w[0], w[1], w[0] * w[1], out);
            out.extend(std::iter::repeat_n(0.0, w[1]));
        }
    }
}

/// An [`MlpSpec`] bound to an offset in the model's parameter vector.
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    offset: usize,
}

impl Mlp {
    pub fn new(spec: MlpSpec, offset: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, offset })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// `x` has shape `input_width x batch`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let rows = tape.value(x).rows();
        if rows != self.spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {rows}",
                self.spec.input_width()
            )));
        }
        let n_layers = self.spec.layer_widths.len() - 1;
        let mut offset = self.offset;
        let mut h = x;
        for (layer, w) in self.spec.layer_widths.windows(2).enumerate() {
            let weight = tape.param(offset, w[1], w[0])?;
            offset += w[0] * w[1];
            let bias = tape.param(offset, w[1], 1)?;
            offset += w[1];
            let z = tape.matmul(weight, h)?;
            let z = tape.add_bias(z, bias)?;
            let act = if layer + 1 == n_layers {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            h = act.apply(tape, z);
        }
        Ok(h)
    }
}

/// Evaluate an MLP on one input vector.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if params.len() != spec.param_count() {
        return Err(Error::ShapeMismatch(format!(
            "network needs {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    let net = Mlp::new(spec.clone(), 0)?;
    let mut tape = Tape::new(params);
    let input = tape.constant(ComplexMatrix::from_real(x.len(), 1, x));
    let out = net.forward(&mut tape, input)?;
    Ok(tape.value(out).re())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl LstmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::ConfigMismatch(format!(
                "invalid LSTM dimensions {self:?}"
            )));
        }
        Ok(())
    }
}

impl NetworkSpec for LstmSpec {
    fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        4 * h * (self.input_dim + h) + 4 * h + self.output_dim * (h + 1)
    }

    fn init_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        glorot_uniform(rng, d, 4 * h, 4 * h * d, out);
        glorot_uniform(rng, h, 4 * h, 4 * h * h, out);
        out.extend(std::iter::repeat_n(0.0, 4 * h));
        glorot_uniform(rng, h, o, o * h, out);
        out.extend(std::iter::repeat_n(0.0, o));
    }
}

/// Single-layer LSTM with gates ordered input, forget, cell, output, a
/// shared gate bias, and an affine readout of the final hidden state.
#[derive(Clone, Debug)]
pub struct Lstm {
    spec: LstmSpec,
    offset: usize,
}

impl Lstm {
    pub fn new(spec: LstmSpec, offset: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, offset })
    }

    pub fn spec(&self) -> &LstmSpec {
        &self.spec
    }

    /// `sequence` has shape `input_dim x steps`; returns the `output_dim x 1` readout.
    pub fn forward(&self, tape: &mut Tape, sequence: Var) -> Result<Var> {
        let (rows, steps) = tape.value(sequence).shape();
        if rows != self.spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "LSTM expects {} inputs per step, got {rows}",
                self.spec.input_dim
            )));
        }
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        let (d, h, o) = (
            self.spec.input_dim,
            self.spec.hidden_dim,
            self.spec.output_dim,
        );
        let mut offset = self.offset;
        let w_ih = tape.param(offset, 4 * h, d)?;
        offset += 4 * h * d;
        let w_hh = tape.param(offset, 4 * h, h)?;
        offset += 4 * h * h;
        let bias = tape.param(offset, 4 * h, 1)?;
        offset += 4 * h;
        let w_out = tape.param(offset, o, h)?;
        offset += o * h;
        let b_out = tape.param(offset, o, 1)?;

        // input contributions for every step at once
        let projected = tape.matmul(w_ih, sequence)?;
        let projected = tape.add_bias(projected, bias)?;

        let mut hidden = tape.constant(ComplexMatrix::zeros(h, 1));
        let mut cell = tape.constant(ComplexMatrix::zeros(h, 1));
        for t in 0..steps {
            let x_t = tape.column(projected, t)?;
            let rec = tape.matmul(w_hh, hidden)?;
            let z = tape.add(x_t, rec)?;
            let zi = tape.slice_rows(z, 0, h)?;
            let zf = tape.slice_rows(z, h, h)?;
            let zg = tape.slice_rows(z, 2 * h, h)?;
            let zo = tape.slice_rows(z, 3 * h, h)?;
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let og = tape.sigmoid(zo);
            let keep = tape.hadamard(f, cell)?;
            let write = tape.hadamard(i, g)?;
            cell = tape.add(keep, write)?;
            let squashed = tape.tanh(cell);
            hidden = tape.hadamard(og, squashed)?;
        }
        let out = tape.matmul(w_out, hidden)?;
        tape.add_bias(out, b_out)
    }
}

/// Run an LSTM over a sequence of input vectors and return the readout.
pub fn lstm_forward(spec: &LstmSpec, params: &[f64], sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    if params.len() != spec.param_count() {
        return Err(Error::ShapeMismatch(format!(
            "LSTM needs {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    let d = spec.input_dim;
    if sequence.iter().any(|x| x.len() != d) {
        return Err(Error::ShapeMismatch(format!(
            "sequence elements must have length {d}"
        )));
    }
    let steps = sequence.len();
    let input = ComplexMatrix::from_fn(d, steps, |r, c| {
        num_complex::Complex64::new(sequence[c][r], 0.0)
    });
    let net = Lstm::new(*spec, 0)?;
    let mut tape = Tape::new(params);
    let x = tape.constant(input);
    let out = net.forward(&mut tape, x)?;
    Ok(tape.value(out).re())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Row-major affine map written without the tape.
    fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let rows = b.len();
        let cols = x.len();
        (0..rows)
            .map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum::<f64>() + b[r])
            .collect()
    }

    #[test]
    fn zero_network_gives_zero() {
        let spec = MlpSpec::three_layer(3, 5, 2, Activation::Linear);
        let out = mlp_forward(&spec, &vec![0.0; spec.param_count()], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let spec = MlpSpec {
            layer_widths: vec![3, 3],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        };
        let mut params = vec![0.0; 12];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.7, 2.5];
        assert_eq!(mlp_forward(&spec, &params, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn mlp_matches_reimplementation() {
        let spec = MlpSpec::three_layer(2, 4, 3, Activation::Sigmoid);
        let params = init_params(&spec, 17);
        let mut p = params.clone();
        // non-zero biases so they are exercised
        for v in p.iter_mut().skip(8).take(4) {
            *v = 0.3;
        }
        let x = [0.7, -0.2];
        let w1 = &p[0..8];
        let b1 = &p[8..12];
        let w2 = &p[12..24];
        let b2 = &p[24..27];
        let h: Vec<f64> = dense(w1, b1, &x).into_iter().map(f64::tanh).collect();
        let expected: Vec<f64> = dense(w2, b2, &h).into_iter().map(sig).collect();
        let got = mlp_forward(&spec, &p, &x).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_rejects_bad_shapes() {
        let spec = MlpSpec::three_layer(2, 4, 1, Activation::Linear);
        assert!(matches!(
            mlp_forward(&spec, &[0.0; 3], &[0.0, 0.0]),
            Err(Error::ShapeMismatch(_))
        ));
        let p = vec![0.0; spec.param_count()];
        assert!(matches!(
            mlp_forward(&spec, &p, &[0.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn param_counts() {
        assert_eq!(
            MlpSpec::three_layer(1, 8, 3, Activation::Linear).param_count(),
            43
        );
        for h in [1, 5, 12] {
            let spec = LstmSpec {
                input_dim: 1,
                hidden_dim: h,
                output_dim: 1,
            };
            assert_eq!(spec.param_count(), 4 * (h * (1 + h) + h) + (h + 1));
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = MlpSpec::three_layer(3, 6, 2, Activation::Linear);
        let a = init_params(&spec, 5);
        assert_eq!(a, init_params(&spec, 5));
        assert_ne!(a, init_params(&spec, 6));
        assert!(a[18..24].iter().all(|&b| b == 0.0));
        assert!(a[36..38].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn glorot_variance() {
        let (fan_in, fan_out) = (30, 70);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = Vec::new();
        glorot_uniform(&mut rng, fan_in, fan_out, 10_000, &mut w);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / (fan_in + fan_out) as f64;
        assert!(
            (var - expected).abs() < 0.1 * expected,
            "{var} vs {expected}"
        );
    }

    #[test]
    fn lstm_zero_params_reads_out_bias() {
        let spec = LstmSpec {
            input_dim: 1,
            hidden_dim: 3,
            output_dim: 2,
        };
        let mut p = vec![0.0; spec.param_count()];
        let n = p.len();
        p[n - 2] = 0.5;
        p[n - 1] = -1.5;
        let out = lstm_forward(&spec, &p, &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(out, vec![0.5, -1.5]);
    }

    #[test]
    fn lstm_rejects_empty() {
        let spec = LstmSpec {
            input_dim: 1,
            hidden_dim: 2,
            output_dim: 1,
        };
        assert!(matches!(
            lstm_forward(&spec, &vec![0.0; spec.param_count()], &[]),
            Err(Error::EmptySequence)
        ));
    }

    /// Hand-unrolled recurrence with plain arrays.
    fn lstm_oracle(spec: &LstmSpec, p: &[f64], seq: &[Vec<f64>]) -> Vec<f64> {
        let (d, h, o) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
        let w_ih = &p[0..4 * h * d];
        let w_hh = &p[4 * h * d..4 * h * d + 4 * h * h];
        let b = &p[4 * h * (d + h)..4 * h * (d + h) + 4 * h];
        let w_out = &p[4 * h * (d + h) + 4 * h..4 * h * (d + h) + 4 * h + o * h];
        let b_out = &p[4 * h * (d + h) + 4 * h + o * h..];
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        for x in seq {
            let zx = dense(w_ih, b, x);
            let zh = dense(w_hh, &vec![0.0; 4 * h], &hs);
            let z: Vec<f64> = zx.iter().zip(&zh).map(|(a, b)| a + b).collect();
            for k in 0..h {
                let i = sig(z[k]);
                let f = sig(z[h + k]);
                let g = z[2 * h + k].tanh();
                let og = sig(z[3 * h + k]);
                cs[k] = f * cs[k] + i * g;
                hs[k] = og * cs[k].tanh();
            }
        }
        dense(w_out, b_out, &hs)
    }

    #[test]
    fn lstm_matches_unrolled_oracle() {
        let spec = LstmSpec {
            input_dim: 2,
            hidden_dim: 3,
            output_dim: 2,
        };
        let mut p = init_params(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in p.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let seq = vec![vec![0.2, -0.4], vec![1.0, 0.3], vec![-0.6, 0.9]];
        let got = lstm_forward(&spec, &p, &seq).unwrap();
        let expected = lstm_oracle(&spec, &p, &seq);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        // a single step is one cell application
        let one = lstm_forward(&spec, &p, &seq[..1]).unwrap();
        let one_oracle = lstm_oracle(&spec, &p, &seq[..1]);
        for (g, e) in one.iter().zip(&one_oracle) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn network_gradients_pass_check() {
        let spec = MlpSpec::three_layer(2, 5, 3, Activation::UnitIntervalVector);
        let net = Mlp::new(spec.clone(), 0).unwrap();
        let mut p = init_params(&spec, 9);
        for (i, v) in p.iter_mut().enumerate() {
            *v += 0.01 * i as f64;
        }
        let report = grad_check(
            |t| {
                let x = t.constant_real(2, 2, &[0.5, -1.0, 0.25, 2.0]);
                let y = net.forward(t, x)?;
                let s = t.sum_columns(y);
                let s = t.slice_rows(s, 1, 1)?;
                t.squared_error(s, 0.1)
            },
            &p,
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");

        let lspec = LstmSpec {
            input_dim: 1,
            hidden_dim: 4,
            output_dim: 1,
        };
        let lstm = Lstm::new(lspec, 0).unwrap();
        let mut lp = init_params(&lspec, 4);
        for (i, v) in lp.iter_mut().enumerate() {
            *v += 0.003 * i as f64;
        }
        let report = grad_check(
            |t| {
                let x = t.constant_real(1, 4, &[0.1, 0.9, 0.4, 0.6]);
                let y = lstm.forward(t, x)?;
                let p = t.sigmoid(y);
                t.binary_cross_entropy(p, 1.0)
            },
            &lp,
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    proptest::proptest! {
        #[test]
        fn unit_interval_output_stays_inside(seed in 0u64..300, x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
            let spec = MlpSpec::three_layer(2, 4, 3, Activation::UnitIntervalVector);
            let p = init_params(&spec, seed);
            let out = mlp_forward(&spec, &p, &[x0, x1]).unwrap();
            proptest::prop_assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
