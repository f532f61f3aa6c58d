use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dslkit::batch::{apply_batch, apply_batch_seq};
use dslkit::exec::{compile_module, HostRegistry, HostValue};
use dslkit::hir::build::*;
use dslkit::hir::HModule;
use dslkit::opt::PassConfig;
use dslkit::HType;

/// Sums i * x for i below n; a loop long enough for per-call work to
/// dominate scheduling overhead.
fn module() -> HModule {
    let body = ret(let_(
        vec![binding("i", si64(0), HType::i64()), binding("s", si64(0), HType::i64())],
        while_(
            icmp_slt(var("i"), var("n")),
            block(vec![set("s", add(var("s"), mul(var("i"), var("x")))), set("i", add(var("i"), si64(1)))]),
        ),
        var("s"),
    ));
    let f = function("dot", vec![("x", HType::i64()), ("n", HType::i64())], HType::i64(), body, &[]).unwrap();
    HModule::new("bench").with(f).unwrap().with(pow_function()).unwrap()
}

fn bench(c: &mut Criterion) {
    let cm = compile_module(&module(), &PassConfig::level(3), &HostRegistry::new()).unwrap();
    let mut g = c.benchmark_group("batch");
    for size in [16usize, 256] {
        let inputs: Vec<Vec<HostValue>> =
            (0..size).map(|i| vec![HostValue::Int(i as i64), HostValue::Int(2_000)]).collect();
        g.bench_with_input(BenchmarkId::new("parallel", size), &inputs, |b, xs| b.iter(|| apply_batch(&cm, "dot", xs)));
        g.bench_with_input(BenchmarkId::new("sequential", size), &inputs, |b, xs| {
            b.iter(|| apply_batch_seq(&cm, "dot", xs))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
