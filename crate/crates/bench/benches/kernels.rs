use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stencilforge::apps::acoustic::acoustic_forward;
use stencilforge::apps::{AcousticModel, RunOptions};
use stencilforge::{BlockingPlan, ElementType};
use stencilforge_bench::diffusion;

fn diffusion_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("diffusion-512-nt20");
    g.sample_size(10);
    let plans = [
        ("off", BlockingPlan::unblocked()),
        ("16x16", BlockingPlan::new(&[("x", 16), ("y", 16)])),
        ("32x32", BlockingPlan::new(&[("x", 32), ("y", 32)])),
    ];
    for (name, plan) in plans {
        let (mut op, u) = diffusion(512, 20, plan);
        g.bench_function(BenchmarkId::new("jit", name), |b| {
            b.iter_batched(|| u.clone(), |mut f| op.apply(&mut [&mut f]).unwrap(), criterion::BatchSize::LargeInput)
        });
    }
    let (op, u) = diffusion(128, 5, BlockingPlan::unblocked());
    g.bench_function("interpreter-128-nt5", |b| {
        b.iter_batched(|| u.clone(), |mut f| op.interpret(&mut [&mut f], None).unwrap(), criterion::BatchSize::LargeInput)
    });
    g.finish();
}

fn acoustic_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("acoustic-2d");
    g.sample_size(10);
    for order in [2, 8] {
        let model = AcousticModel::two_layer(&[120, 120], order, ElementType::F32).unwrap().with_nt(100);
        let src = model.ricker_source();
        let opts = RunOptions {
            threads: Some(1),
            ..RunOptions::default()
        };
        // the first call compiles; later calls hit the kernel cache
        acoustic_forward(&model, &src, &opts).unwrap();
        g.bench_function(BenchmarkId::new("forward", order), |b| {
            b.iter(|| acoustic_forward(&model, &src, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, diffusion_kernels, acoustic_kernels);
criterion_main!(benches);
