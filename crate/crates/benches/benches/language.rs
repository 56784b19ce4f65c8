use criterion::{criterion_group, criterion_main, Criterion};
use egur_benches::strategy_texts;
use egur_core::lang::{parse_strategy, pretty_print};
use std::hint::black_box;

fn parse_and_print(c: &mut Criterion) {
    let mut g = c.benchmark_group("language");
    for (name, text) in strategy_texts() {
        g.bench_function(format!("parse/{name}"), |b| b.iter(|| parse_strategy(black_box(&text)).unwrap()));
        let p = parse_strategy(&text).unwrap();
        g.bench_function(format!("print/{name}"), |b| b.iter(|| pretty_print(black_box(&p))));
    }
    g.finish();
}

criterion_group!(benches, parse_and_print);
criterion_main!(benches);
