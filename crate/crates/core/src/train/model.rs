use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, Var};
use crate::datagen::{EntropySample, SequenceSample};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::nn::{Lstm, LstmSpec, NetworkSpec};
use crate::params::{ParamLayout, ParamVector};
use crate::qds::{ClassicalDeepSetsModel, ClassicalDsConfig, QdsConfig, QdsModel};
use crate::qdseq::{QdseqConfig, QdseqModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Squared error against a real target.
    Regression,
    /// Cross-entropy of a probability against a 0/1 label.
    Classification,
}

/// One set or sequence: elements are the columns of `input`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: ComplexMatrix,
    pub target: f64,
}

impl From<&EntropySample> for Example {
    fn from(s: &EntropySample) -> Self {
        let m = s.points.len();
        let values: Vec<f64> = (0..2)
            .flat_map(|r| s.points.iter().map(move |p| p[r]))
            .collect();
        Example {
            input: ComplexMatrix::from_real(2, m, &values),
            target: s.target,
        }
    }
}

impl From<&SequenceSample> for Example {
    fn from(s: &SequenceSample) -> Self {
        Example {
            input: ComplexMatrix::from_real(1, s.values.len(), &s.values),
            target: f64::from(s.label),
        }
    }
}

/// Architecture of any trainable model; the serialized form carries a `kind` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Qds(QdsConfig),
    ClassicalDs(ClassicalDsConfig),
    Qdseq(QdseqConfig),
    Lstm(LstmSpec),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Qds(_) => "qds",
            ModelSpec::ClassicalDs(_) => "classical-ds",
            ModelSpec::Qdseq(_) => "qdseq",
            ModelSpec::Lstm(_) => "lstm",
        }
    }

    pub fn layout(&self) -> ParamLayout {
        match self {
            ModelSpec::Qds(c) => c.layout(),
            ModelSpec::ClassicalDs(c) => c.layout(),
            ModelSpec::Qdseq(c) => c.layout(),
            ModelSpec::Lstm(s) => {
                let mut layout = ParamLayout::new();
                layout.push("lstm", s.param_count());
                layout
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Qds(c) => c.input_dim,
            ModelSpec::ClassicalDs(c) => c.input_dim,
            ModelSpec::Qdseq(c) => c.input_dim,
            ModelSpec::Lstm(s) => s.input_dim,
        }
    }
}

/// LSTM followed by a sigmoid on its scalar readout.
#[derive(Clone, Debug)]
pub struct LstmClassifier {
    net: Lstm,
    params: ParamVector,
}

impl LstmClassifier {
    pub fn new(spec: LstmSpec, seed: u64) -> Result<Self> {
        Self::with_params(spec, crate::nn::init_params(&spec, seed))
    }

    pub fn with_params(spec: LstmSpec, values: Vec<f64>) -> Result<Self> {
        if spec.output_dim != 1 {
            return Err(Error::ConfigMismatch(
                "the LSTM classifier has a single output".into(),
            ));
        }
        Ok(Self {
            net: Lstm::new(spec, 0)?,
            params: ParamVector::new(values, ModelSpec::Lstm(spec).layout())?,
        })
    }

    pub fn spec(&self) -> &LstmSpec {
        self.net.spec()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn forward_tape(&self, tape: &mut Tape, sequence: Var) -> Result<Var> {
        let logit = self.net.forward(tape, sequence)?;
        Ok(tape.sigmoid(logit))
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Qds(QdsModel),
    ClassicalDs(ClassicalDeepSetsModel),
    Qdseq(QdseqModel),
    Lstm(LstmClassifier),
}

impl Model {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Qds(c) => Model::Qds(QdsModel::new(c.clone(), seed)?),
            ModelSpec::ClassicalDs(c) => {
                Model::ClassicalDs(ClassicalDeepSetsModel::new(c.clone(), seed)?)
            }
            ModelSpec::Qdseq(c) => Model::Qdseq(QdseqModel::new(c.clone(), seed)?),
            ModelSpec::Lstm(s) => Model::Lstm(LstmClassifier::new(*s, seed)?),
        })
    }

    pub fn with_params(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::ConfigMismatch(format!(
                "{} model needs {} parameters, got {}",
                spec.kind(),
                spec.param_count(),
                values.len()
            )));
        }
        Ok(match spec {
            ModelSpec::Qds(c) => Model::Qds(QdsModel::with_params(c.clone(), values)?),
            ModelSpec::ClassicalDs(c) => {
                Model::ClassicalDs(ClassicalDeepSetsModel::with_params(c.clone(), values)?)
            }
            ModelSpec::Qdseq(c) => Model::Qdseq(QdseqModel::with_params(c.clone(), values)?),
            ModelSpec::Lstm(s) => Model::Lstm(LstmClassifier::with_params(*s, values)?),
        })
    }

    /// Architecture including, for QDSeq, the tensor in use.
    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Qds(m) => ModelSpec::Qds(m.config().clone()),
            Model::ClassicalDs(m) => ModelSpec::ClassicalDs(m.config().clone()),
            Model::Qdseq(m) => {
                let mut c = m.config().clone();
                c.tensor = Some(m.tensor().clone());
                ModelSpec::Qdseq(c)
            }
            Model::Lstm(m) => ModelSpec::Lstm(*m.spec()),
        }
    }

    pub fn params(&self) -> &ParamVector {
        match self {
            Model::Qds(m) => m.params(),
            Model::ClassicalDs(m) => m.params(),
            Model::Qdseq(m) => m.params(),
            Model::Lstm(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Qds(m) => m.params_mut().values_mut(),
            Model::ClassicalDs(m) => m.params_mut().values_mut(),
            Model::Qdseq(m) => m.params_mut().values_mut(),
            Model::Lstm(m) => m.params.values_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Scalar prediction for one example, reading parameters from the tape.
    pub fn predict_tape(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let out = match self {
            Model::Qds(m) => m.forward_tape(tape, input)?,
            Model::ClassicalDs(m) => m.forward_tape(tape, input)?,
            Model::Qdseq(m) => m.forward_tape(tape, input)?,
            Model::Lstm(m) => m.forward_tape(tape, input)?,
        };
        if tape.value(out).shape() != (1, 1) {
            return Err(Error::ConfigMismatch(
                "model output must be a single value".into(),
            ));
        }
        Ok(out)
    }

    /// Per-example loss on a tape.
    pub fn loss_tape(&self, tape: &mut Tape, example: &Example, task: Task) -> Result<Var> {
        let x = tape.constant(example.input.clone());
        let pred = self.predict_tape(tape, x)?;
        match task {
            Task::Regression => tape.squared_error(pred, example.target),
            Task::Classification => tape.binary_cross_entropy(pred, example.target),
        }
    }

    pub fn predict(&self, example: &Example) -> Result<f64> {
        let mut tape = Tape::new(self.params().values());
        let x = tape.constant(example.input.clone());
        let out = self.predict_tape(&mut tape, x)?;
        Ok(tape.scalar(out))
    }

    pub fn loss_and_grad(&self, example: &Example, task: Task) -> Result<(f64, Vec<f64>)> {
        autodiff::value_and_grad(self.params().values(), |t| self.loss_tape(t, example, task))
    }
}
