use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DatasetKind, TrainConfig};
use super::model::{Example, Model, Task};
use super::{loss_bce, loss_mse, Adam};
use crate::datagen::{
    gen_entropy_dataset, gen_sorted_dataset, read_jsonl, EntropySample, SequenceSample,
};
use crate::error::{Error, Result};
use crate::par::{map_ordered, Execution};

/// One line of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub size: usize,
    pub step: usize,
    pub train_loss: f64,
    pub test_metric: f64,
    pub seconds: f64,
    pub param_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub execution: Execution,
    /// Wall-clock seconds in the metrics; when off the column is 0 so output
    /// files are byte-reproducible.
    pub record_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            execution: Execution::from_env(),
            record_time: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub count: usize,
    /// Mean squared error or mean cross-entropy.
    pub loss: f64,
    /// Fraction of correct 0.5-threshold decisions; classification only.
    pub accuracy: Option<f64>,
}

/// Pure inference over `examples`.
pub fn evaluate(
    model: &Model,
    examples: &[Example],
    task: Task,
    exec: Execution,
) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::ConfigMismatch(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let preds = map_ordered(exec, examples, |e| model.predict(e));
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (p, e) in preds.into_iter().zip(examples) {
        let p = p?;
        match task {
            Task::Regression => loss += loss_mse(p, e.target),
            Task::Classification => {
                loss += loss_bce(p, e.target);
                if (p >= 0.5) == (e.target >= 0.5) {
                    correct += 1;
                }
            }
        }
    }
    let n = examples.len() as f64;
    Ok(Evaluation {
        count: examples.len(),
        loss: loss / n,
        accuracy: (task == Task::Classification).then(|| correct as f64 / n),
    })
}

/// Mean loss and gradient over a batch; per-example work may run in
/// parallel but the sum is taken in batch order.
pub fn batch_gradient(
    model: &Model,
    batch: &[&Example],
    task: Task,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    let per_example = map_ordered(exec, batch, |e| model.loss_and_grad(e, task));
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for r in per_example {
        let (l, g) = r?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub model: Model,
    pub final_eval: Evaluation,
}

const SHUFFLE_STREAM: u64 = 0x5eed;

/// Mini-batch Adam from a fresh model. Rows are written at step 0, at the
/// configured cadence and after the last step.
pub fn train(
    config: &TrainConfig,
    train_set: &[Example],
    test_set: &[Example],
    opts: RunOptions,
) -> Result<TrainOutcome> {
    let spec = config.model_spec()?;
    if train_set.is_empty() {
        return Err(Error::ConfigMismatch("empty training set".into()));
    }
    for e in train_set.iter().chain(test_set) {
        if e.input.rows() != spec.input_dim() {
            return Err(Error::ConfigMismatch(format!(
                "{} model takes {}-dimensional elements, data has {}",
                spec.kind(),
                spec.input_dim(),
                e.input.rows()
            )));
        }
    }
    let task = config.task();
    let mut model = Model::new(&spec, config.seed)?;
    let mut adam = Adam::new(model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);

    let start = Instant::now();
    let mut rows = Vec::new();
    let eval_row = |model: &Model, step: usize| -> Result<(MetricsRow, Evaluation)> {
        let train_eval = evaluate(model, train_set, task, opts.execution)?;
        let test_eval = evaluate(model, test_set, task, opts.execution)?;
        let row = MetricsRow {
            size: train_set.len(),
            step,
            train_loss: train_eval.loss,
            test_metric: test_eval.loss,
            seconds: if opts.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            param_count: model.param_count(),
        };
        log::info!(
            "size {} step {step}: train {:.6} test {:.6}",
            row.size,
            row.train_loss,
            row.test_metric
        );
        Ok((row, test_eval))
    };

    let (row, mut last_eval) = eval_row(&model, 0)?;
    rows.push(row);

    let batch_size = config.batch_size.min(train_set.len());
    let batches_per_epoch = train_set.len().div_ceil(batch_size);
    let total_steps = config.steps.unwrap_or(config.epochs * batches_per_epoch);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    let mut evaluated_at = 0;
    while step < total_steps {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            if step >= total_steps {
                break;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (_, grad) = batch_gradient(&model, &batch, task, opts.execution)?;
            adam.step(model.params_mut(), &grad, config.learning_rate);
            step += 1;
            if matches!(config.eval_every, Some(k) if k > 0 && step % k == 0) {
                let (row, e) = eval_row(&model, step)?;
                rows.push(row);
                last_eval = e;
                evaluated_at = step;
            }
        }
        if config.eval_every.is_none() && evaluated_at != step {
            let (row, e) = eval_row(&model, step)?;
            rows.push(row);
            last_eval = e;
            evaluated_at = step;
        }
    }
    if evaluated_at != step {
        let (row, e) = eval_row(&model, step)?;
        rows.push(row);
        last_eval = e;
    }
    Ok(TrainOutcome {
        rows,
        model,
        final_eval: last_eval,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub row: MetricsRow,
    pub test_accuracy: Option<f64>,
}

/// Fresh model per size, trained on the first `size` examples of `pool`;
/// one row per size with the final test metric.
pub fn sweep(
    config: &TrainConfig,
    sizes: &[usize],
    pool: &[Example],
    test_set: &[Example],
    opts: RunOptions,
) -> Result<Vec<SweepPoint>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::ConfigMismatch(
            "sweep sizes must be ascending".into(),
        ));
    }
    let mut cfg = config.clone();
    cfg.eval_every = Some(0);
    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 || size > pool.len() {
            return Err(Error::ConfigMismatch(format!(
                "sweep size {size} outside the pool of {} examples",
                pool.len()
            )));
        }
        let outcome = train(&cfg, &pool[..size], test_set, opts)?;
        let row = outcome
            .rows
            .last()
            .cloned()
            .expect("training always records a row");
        points.push(SweepPoint {
            row,
            test_accuracy: outcome.final_eval.accuracy,
        });
    }
    Ok(points)
}

/// CSV with columns `size,step,train_loss,test_metric,seconds,param_count`.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &std::path::Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn entropy_examples(samples: &[EntropySample]) -> Vec<Example> {
    samples.iter().map(Example::from).collect()
}

pub fn sequence_examples(samples: &[SequenceSample]) -> Vec<Example> {
    samples.iter().map(Example::from).collect()
}

/// Examples from a JSONL file of the given kind.
pub fn load_examples(kind: DatasetKind, path: &std::path::Path) -> Result<Vec<Example>> {
    Ok(match kind {
        DatasetKind::Entropy => entropy_examples(&read_jsonl::<EntropySample>(path)?),
        DatasetKind::Sorted => sequence_examples(&read_jsonl::<SequenceSample>(path)?),
    })
}

pub fn generate_examples(kind: DatasetKind, count: usize, seed: u64) -> Result<Vec<Example>> {
    Ok(match kind {
        DatasetKind::Entropy => entropy_examples(&gen_entropy_dataset(count, seed)?),
        DatasetKind::Sorted => sequence_examples(&gen_sorted_dataset(count, seed)),
    })
}

/// Training and test sets from the configured paths, or generated from the
/// configured counts and seeds.
pub fn config_datasets(config: &TrainConfig) -> Result<(Vec<Example>, Vec<Example>)> {
    let kind = config.dataset();
    let train = match &config.train_path {
        Some(p) => load_examples(kind, p)?,
        None => generate_examples(kind, config.train_count, config.data_seed)?,
    };
    let test = match &config.test_path {
        Some(p) => load_examples(kind, p)?,
        None => generate_examples(kind, config.test_count, config.test_seed)?,
    };
    Ok((train, test))
}
