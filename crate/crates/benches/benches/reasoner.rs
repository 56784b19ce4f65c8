use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use egur_benches::{instant_reasoner, sum_tasks};
use egur_core::egur::Context;

fn reasoner(c: &mut Criterion) {
    let mut g = c.benchmark_group("reasoner");
    g.sample_size(20);
    let egur = instant_reasoner(3);
    let task = &sum_tasks(1)[0];
    g.bench_function("episode/k3", |b| {
        b.iter_batched(Context::default, |mut ctx| egur.episode(task, &mut ctx), BatchSize::SmallInput)
    });
    let tasks = sum_tasks(20);
    g.bench_function("continual/20-tasks", |b| b.iter(|| egur.run_continual(&tasks, Context::default(), &[])));
    g.finish();
}

criterion_group!(benches, reasoner);
criterion_main!(benches);
