use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, Task};
use crate::error::{Error, Result};
use crate::nn::{Activation, LstmSpec};
use crate::qds::{ClassicalDsConfig, QdsConfig};
use crate::qdseq::{QdseqConfig, TristochasticTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Qds,
    ClassicalDs,
    Qdseq,
    Lstm,
}

impl ModelKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "qds" => Some(ModelKind::Qds),
            "classical-ds" => Some(ModelKind::ClassicalDs),
            "qdseq" => Some(ModelKind::Qdseq),
            "lstm" => Some(ModelKind::Lstm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qds => "qds",
            ModelKind::ClassicalDs => "classical-ds",
            ModelKind::Qdseq => "qdseq",
            ModelKind::Lstm => "lstm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Entropy,
    Sorted,
}

impl DatasetKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "entropy" => Some(DatasetKind::Entropy),
            "sorted" => Some(DatasetKind::Sorted),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Entropy => "entropy",
            DatasetKind::Sorted => "sorted",
        }
    }

    pub fn task(self) -> Task {
        match self {
            DatasetKind::Entropy => Task::Regression,
            DatasetKind::Sorted => Task::Classification,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            DatasetKind::Entropy => 2,
            DatasetKind::Sorted => 1,
        }
    }
}

/// Everything needed to reproduce a training run. Widths left unset take
/// per-dataset defaults (see [`TrainConfig::model_spec`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Defaults to entropy for set models and sorted for sequence models.
    pub dataset: Option<DatasetKind>,
    pub n_qubits: usize,
    pub theta_hidden: Option<usize>,
    pub w_hidden: Option<usize>,
    pub h_hidden: Option<usize>,
    pub g_hidden: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub freeze_channel: bool,
    /// JSON triples for the channel tensor; cyclic tensor when unset.
    pub tensor_path: Option<PathBuf>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Total optimizer steps; overrides `epochs` when set.
    pub steps: Option<usize>,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Used when no path is given.
    pub train_count: usize,
    pub test_count: usize,
    pub data_seed: u64,
    pub test_seed: u64,
    /// Steps between evaluations; unset means once per epoch and 0 means
    /// only before and after training.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Qds,
            dataset: None,
            n_qubits: 1,
            theta_hidden: None,
            w_hidden: None,
            h_hidden: None,
            g_hidden: None,
            embedding_dim: None,
            lstm_hidden: None,
            freeze_channel: false,
            tensor_path: None,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            steps: None,
            seed: 0,
            train_path: None,
            test_path: None,
            train_count: 1024,
            test_count: 1024,
            data_seed: 1,
            test_seed: 2,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    /// TOML for `.toml` files, JSON otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Ok(toml::from_str(&text)?)
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }

    pub fn dataset(&self) -> DatasetKind {
        self.dataset.unwrap_or(match self.model {
            ModelKind::Qds | ModelKind::ClassicalDs => DatasetKind::Entropy,
            ModelKind::Qdseq | ModelKind::Lstm => DatasetKind::Sorted,
        })
    }

    pub fn task(&self) -> Task {
        self.dataset().task()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigMismatch(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.n_qubits == 0 || self.n_qubits > 6 {
            return bad(format!("qubit count {} outside 1..=6", self.n_qubits));
        }
        if self.train_count == 0 || self.test_count == 0 {
            return bad("dataset counts must be positive".into());
        }
        for w in [
            self.theta_hidden,
            self.w_hidden,
            self.h_hidden,
            self.g_hidden,
            self.embedding_dim,
            self.lstm_hidden,
        ]
        .into_iter()
        .flatten()
        {
            if w == 0 {
                return bad("network widths must be positive".into());
            }
        }
        if matches!(self.model, ModelKind::Qdseq | ModelKind::Lstm)
            && self.dataset() == DatasetKind::Entropy
        {
            return bad(format!(
                "{} is a sequence classifier; use the sorted dataset",
                self.model.name()
            ));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.validate()?;
        let data = self.dataset();
        let entropy = data == DatasetKind::Entropy;
        let output_activation = match data.task() {
            Task::Regression => Activation::Linear,
            Task::Classification => Activation::Sigmoid,
        };
        let default_hidden = if entropy { 8 } else { 34 };
        Ok(match self.model {
            ModelKind::Qds => ModelSpec::Qds(QdsConfig {
                n_qubits: self.n_qubits,
                input_dim: data.input_dim(),
                theta_hidden: self.theta_hidden.unwrap_or(default_hidden),
                h_hidden: self.h_hidden.unwrap_or(if entropy { 100 } else { 34 }),
                output_dim: 1,
                output_activation,
            }),
            ModelKind::ClassicalDs => ModelSpec::ClassicalDs(ClassicalDsConfig {
                input_dim: data.input_dim(),
                g_hidden: self.g_hidden.unwrap_or(default_hidden),
                embedding_dim: self.embedding_dim.unwrap_or(2 << self.n_qubits),
                h_hidden: self.h_hidden.unwrap_or(if entropy { 100 } else { 34 }),
                output_dim: 1,
                output_activation,
            }),
            ModelKind::Qdseq => {
                let tensor = match &self.tensor_path {
                    Some(p) => Some(TristochasticTensor::load_json(p)?),
                    None => None,
                };
                ModelSpec::Qdseq(QdseqConfig {
                    n_qubits: self.n_qubits,
                    input_dim: data.input_dim(),
                    theta_hidden: self.theta_hidden.unwrap_or(34),
                    w_hidden: self.w_hidden.unwrap_or(34),
                    h_hidden: self.h_hidden.unwrap_or(34),
                    output_dim: 1,
                    freeze_channel: self.freeze_channel,
                    tensor,
                })
            }
            ModelKind::Lstm => ModelSpec::Lstm(LstmSpec {
                input_dim: data.input_dim(),
                hidden_dim: self.lstm_hidden.unwrap_or(12),
                output_dim: 1,
            }),
        })
    }
}
