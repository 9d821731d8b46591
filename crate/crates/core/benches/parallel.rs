use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use udplab::analysis::{grid_map, margin_dataset, GridRange, MarginSearch};
use udplab::data::{generate, SynthKind, SynthSpec};
use udplab::exec::with_single_thread;
use udplab::objectives::{init_ensemble, TrainConfig, TrainObjective, Trainer};
use udplab::{Method, PerturbSpec};

fn pooled_vs_single(c: &mut Criterion) {
    let data = generate(&SynthSpec::new(SynthKind::narrow_corridor(), 1)).unwrap();
    let ens = init_ensemble(&[2, 64, 64, 2], 3, 0, 2).unwrap();
    let spec = PerturbSpec::new(Method::UdpPgd, 0.5, 0.05, 10).with_randomized_steps(true);
    let trainer = Trainer::new(
        ens.clone(),
        TrainConfig::standard(1, 128, 0.01, 3).with_objective(TrainObjective::ErmP, Some(spec)),
    )
    .unwrap();
    let batch: Vec<usize> = (0..data.len()).collect();
    let range = GridRange::around(&data, 0.15, 100, 100).unwrap();
    let search = MarginSearch::default();

    let mut group = c.benchmark_group("udp_batch_gradients");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new("pool", data.len()), |b| {
        b.iter(|| trainer.batch_gradients(&data, &batch).unwrap())
    });
    group.bench_function(BenchmarkId::new("single", data.len()), |b| {
        b.iter(|| with_single_thread(|| trainer.batch_gradients(&data, &batch).unwrap()))
    });
    group.finish();

    let mut group = c.benchmark_group("grid_map");
    group.sample_size(20);
    group.bench_function("pool", |b| b.iter(|| grid_map(&ens, &range).unwrap()));
    group.bench_function("single", |b| b.iter(|| with_single_thread(|| grid_map(&ens, &range).unwrap())));
    group.finish();

    let mut group = c.benchmark_group("margin_dataset");
    group.sample_size(10);
    group.bench_function("pool", |b| b.iter(|| margin_dataset(&ens, &data, &search).unwrap()));
    group.bench_function("single", |b| {
        b.iter(|| with_single_thread(|| margin_dataset(&ens, &data, &search).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, pooled_vs_single);
criterion_main!(benches);
