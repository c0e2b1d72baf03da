//! Sequential vs rayon mini-batch gradients.
//!
//! Per-example gradients are independent, so the batch map is the parallel
//! hot spot of training. Both paths reduce in input order and must agree
//! bit for bit; that is asserted once before timing.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qdss::par::Execution;
use qdss::train::{
    batch_gradient, generate_examples, DatasetKind, Example, Model, ModelKind, TrainConfig,
};

fn setup(model: ModelKind, data: DatasetKind, batch: usize) -> (Model, Vec<Example>, TrainConfig) {
    let config = TrainConfig {
        model,
        dataset: Some(data),
        ..Default::default()
    };
    let model = Model::new(&config.model_spec().unwrap(), 0).unwrap();
    let examples = generate_examples(data, batch, 11).unwrap();
    (model, examples, config)
}

fn bench_batch(c: &mut Criterion) {
    let cases = [
        ("qds-entropy", ModelKind::Qds, DatasetKind::Entropy, 8),
        ("qdseq-sorted", ModelKind::Qdseq, DatasetKind::Sorted, 32),
        ("lstm-sorted", ModelKind::Lstm, DatasetKind::Sorted, 32),
    ];
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for (name, kind, data, batch) in cases {
        let (model, examples, config) = setup(kind, data, batch);
        let refs: Vec<&Example> = examples.iter().collect();
        let task = config.task();
        let seq = batch_gradient(&model, &refs, task, Execution::Sequential).unwrap();
        let par = batch_gradient(&model, &refs, task, Execution::Parallel).unwrap();
        assert_eq!(
            seq, par,
            "{name}: parallel reduction differs from sequential"
        );

        for exec in [Execution::Sequential, Execution::Parallel] {
            let label = format!("{exec:?}").to_lowercase();
            group.bench_with_input(BenchmarkId::new(name, label), &exec, |b, &exec| {
                b.iter(|| batch_gradient(black_box(&model), black_box(&refs), task, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_batch);
criterion_main!(benches);
