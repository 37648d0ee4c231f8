use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use cdgan::autodiff::kernels::{self, matmul_acc, matmul_naive, matmul_nt_acc, matmul_tn_acc};
use cdgan::autodiff::{Matrix, Tape};
use cdgan::eval::{kmeans, EvalConfig};
use cdgan::rng::seeded;

fn random(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn modes() -> Vec<(&'static str, bool)> {
    if cfg!(feature = "parallel") {
        vec![("sequential", false), ("parallel", true)]
    } else {
        vec![("sequential", false)]
    }
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &(m, k, n) in &[(64, 256, 128), (256, 256, 256), (512, 128, 256)] {
        let a = random(m * k, 1);
        let b = random(k * n, 2);
        let bt = random(n * k, 3);
        let at = random(k * m, 4);
        let label = format!("{m}x{k}x{n}");
        for (mode, on) in modes() {
            kernels::set_parallel(on);
            group.bench_with_input(BenchmarkId::new(format!("nn/{mode}"), &label), &(), |bench, _| {
                let mut out = vec![0.0f32; m * n];
                bench.iter(|| matmul_acc(black_box(&a), black_box(&b), &mut out, m, k, n))
            });
            group.bench_with_input(BenchmarkId::new(format!("nt/{mode}"), &label), &(), |bench, _| {
                let mut out = vec![0.0f32; m * n];
                bench.iter(|| matmul_nt_acc(black_box(&a), black_box(&bt), &mut out, m, k, n))
            });
            group.bench_with_input(BenchmarkId::new(format!("tn/{mode}"), &label), &(), |bench, _| {
                let mut out = vec![0.0f32; m * n];
                bench.iter(|| matmul_tn_acc(black_box(&at), black_box(&b), &mut out, k, m, n))
            });
        }
        group.bench_with_input(BenchmarkId::new("naive", &label), &(), |bench, _| {
            bench.iter(|| matmul_naive(black_box(&a), black_box(&b), m, k, n))
        });
    }
    kernels::set_parallel(true);
    group.finish();
}

fn mlp_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("mlp_forward_backward");
    let x = Matrix::new(64, 256, random(64 * 256, 5)).unwrap();
    let w1 = Matrix::new(256, 128, random(256 * 128, 6)).unwrap();
    let w2 = Matrix::new(128, 1, random(128, 7)).unwrap();
    for (mode, on) in modes() {
        kernels::set_parallel(on);
        group.bench_function(mode, |bench| {
            bench.iter(|| {
                let mut tape = Tape::<f32>::new();
                let xt = tape.constant(&x);
                let a = tape.param(&w1);
                let b = tape.param(&w2);
                let h = tape.matmul(xt, a).unwrap();
                let h = tape.leaky_relu(h, 0.2).unwrap();
                let o = tape.matmul(h, b).unwrap();
                let l = tape.mean(o);
                black_box(tape.backward(l).unwrap());
            })
        });
    }
    kernels::set_parallel(true);
    group.finish();
}

fn kmeans_restarts(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(20);
    let f = Matrix::new(600, 16, random(600 * 16, 8).into_iter().map(f64::from).collect()).unwrap();
    let cfg = EvalConfig::default();
    for (mode, on) in modes() {
        kernels::set_parallel(on);
        group.bench_function(BenchmarkId::new(mode, "8_restarts"), |bench| {
            bench.iter(|| kmeans(black_box(&f), 3, 8, cfg.max_iter, &mut seeded(9)).unwrap())
        });
    }
    kernels::set_parallel(true);
    group.finish();
}

criterion_group!(benches, matmul, mlp_step, kmeans_restarts);
criterion_main!(benches);
