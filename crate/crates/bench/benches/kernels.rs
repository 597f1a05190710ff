use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hlkernel::dforms::{BetaMetric, KernelContext, KernelId};
use hlkernel::geom::pinched;
use hlkernel::jet::C64;
use hlkernel::krewrite::ScriptBook;
use hlkernel::quad::{mc_integral, sample, Region};
use hlkernel_bench::{pinched_pair, EXPRESSIONS};

fn kernel_eval(c: &mut Criterion) {
    let d = pinched();
    let ctx = KernelContext::new(&d, BetaMetric::Levi);
    let (zeta, z) = pinched_pair();
    for id in ["B(1)", "K(1)@0.05", "C(1)@0.05", "P(1)@0.05"] {
        let k: KernelId = id.parse().unwrap();
        c.bench_function(&format!("eval {id}"), |b| b.iter(|| ctx.eval(black_box(&k), &zeta, &z).unwrap()));
    }
}

fn typecheck(c: &mut Criterion) {
    let exprs: Vec<_> = EXPRESSIONS.iter().map(|s| hlkernel::kexpr::parse(s, 2).unwrap()).collect();
    c.bench_function("parse", |b| b.iter(|| hlkernel::kexpr::parse(black_box(EXPRESSIONS[2]), 2).unwrap()));
    c.bench_function("double_type", |b| {
        b.iter(|| exprs.iter().map(|e| hlkernel::double_type(black_box(e)).unwrap().0.s).sum::<i32>())
    });
}

fn replay(c: &mut Criterion) {
    let book = ScriptBook::builtin();
    c.bench_function("replay derM_iv", |b| b.iter(|| book.replay(black_box("derM_iv")).unwrap().certified()));
}

fn monte_carlo(c: &mut Criterion) {
    let d = pinched();
    let mut g = c.benchmark_group("mc");
    g.sample_size(10);
    g.bench_function("sample interior 10k", |b| {
        b.iter(|| sample(&d, Region::Interior { eps: 0.05 }, 10_000, 1).unwrap())
    });
    let s = sample(&d, Region::Interior { eps: 0.05 }, 10_000, 1).unwrap();
    g.bench_function("integrate r^2 10k", |b| {
        b.iter(|| mc_integral(&|p| Ok(C64::new(d.r(p).powi(2), 0.0)), &s).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernel_eval, typecheck, replay, monte_carlo);
criterion_main!(benches);
