//! Losses, the optimizer, training loops, size sweeps and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod model;
mod run;

pub use adam::{adam_step, Adam};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{DatasetKind, ModelKind, TrainConfig};
pub use loss::{loss_bce, loss_mse, mean_mse};
pub use model::{Example, LstmClassifier, Model, ModelSpec, Task};
pub use run::{
    batch_gradient, config_datasets, entropy_examples, evaluate, generate_examples, load_examples,
    read_metrics_csv, sequence_examples, sweep, train, write_metrics_csv, Evaluation, MetricsRow,
    RunOptions, SweepPoint, TrainOutcome,
};
