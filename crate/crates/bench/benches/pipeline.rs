use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fairpm_core::debias::{AdversarialModel, TrainingConfig};
use fairpm_core::encoding::{build_dataset, build_schema};
use fairpm_core::explain::{buffered, sample_rows, shapley_exact, shapley_sampled};
use fairpm_core::neuralnet::Gradients;
use fairpm_core::synthlog::{generate, SynthConfig};

fn pipeline(c: &mut Criterion) {
    let config = SynthConfig {
        n_traces: 500,
        ..SynthConfig::hiring_like(0)
    };
    let log = generate(&config).unwrap();
    let schema = build_schema(&log, &["gender".to_owned()]).unwrap();
    let outcome = config.outcome_spec();

    c.bench_function("generate 500 traces", |b| b.iter(|| generate(&config).unwrap()));
    c.bench_function("encode 500 traces", |b| {
        b.iter(|| build_dataset(&schema, &log, &outcome).unwrap())
    });

    let data = build_dataset(&schema, &log, &outcome).unwrap();
    let model = AdversarialModel::untrained(&data, &schema, &outcome, &TrainingConfig::default()).unwrap();
    let x = data.instances[0].values().to_vec();
    c.bench_function("forward", |b| b.iter(|| model.predictor.forward(&x)));
    c.bench_function("joint gradients", |b| {
        b.iter_batched_ref(
            || Gradients::zeros_like(&model.predictor),
            |grads| model.predictor_gradients(&x, data.targets[0], 1.0, 1.0, grads),
            BatchSize::SmallInput,
        )
    });

    let players = schema.players();
    let background = sample_rows(&data, 20, 0);
    let f = buffered(&model);
    c.bench_function("shapley exact", |b| {
        b.iter(|| shapley_exact(&f, &players, &x, &background).unwrap())
    });
    c.bench_function("shapley sampled 2000", |b| {
        b.iter(|| shapley_sampled(&f, &players, &x, &background, 2000, 0).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pipeline
}
criterion_main!(benches);
