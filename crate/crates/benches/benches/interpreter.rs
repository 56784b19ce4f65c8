use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use egur_benches::{step_chain, step_registry, step_tree};
use egur_core::bench::{random_formula, CnfFormula};
use egur_core::lang::Value;
use egur_core::processes::verify_3sat;
use egur_core::semantics::{Interpreter, RunState};
use std::hint::black_box;

fn interpret(c: &mut Criterion) {
    let reg = step_registry();
    let mut g = c.benchmark_group("interpreter");
    for n in [16usize, 256] {
        let chain = step_chain(n);
        g.bench_with_input(BenchmarkId::new("chain", n), &chain, |b, p| {
            b.iter(|| Interpreter::new(&reg).run(p, Value::Number(0.0), &mut RunState::new(0)).unwrap())
        });
        let tree = step_tree(n);
        for parallel in [false, true] {
            let label = if parallel { "par-threads" } else { "par-sequential" };
            g.bench_with_input(BenchmarkId::new(label, n), &tree, |b, p| {
                b.iter(|| {
                    Interpreter::new(&reg).with_parallel(parallel).run(p, Value::Number(0.0), &mut RunState::new(0)).unwrap()
                })
            });
        }
    }
    g.finish();
}

fn assignment(f: &CnfFormula) -> String {
    (1..=f.num_vars).map(|v| format!("x{v}={}", if v % 2 == 0 { "T" } else { "F" })).collect::<Vec<_>>().join(",")
}

fn sat(c: &mut Criterion) {
    let mut g = c.benchmark_group("sat");
    for n in [12u32, 40] {
        let f = random_formula(n, 4.26, 1).unwrap();
        let a = assignment(&f);
        g.bench_with_input(BenchmarkId::new("verify", n), &(f.clone(), a), |b, (f, a)| {
            b.iter(|| verify_3sat(black_box(f), black_box(a)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decide", n), &f, |b, f| b.iter(|| black_box(f).satisfiable()));
    }
    g.finish();
}

criterion_group!(benches, interpret, sat);
criterion_main!(benches);
