//! Sequential vs rayon-parallel execution of the hot loops.
//!
//! Without the `parallel` feature both strategies run the same code, so the
//! two lines should coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gdnet::conv::{conv2d_backward, conv2d_forward};
use gdnet::{init_network, Exec, GdNetConfig, Tensor};
use std::hint::black_box;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn ramp(shape: &[usize], scale: f32) -> Tensor<f32> {
    Tensor::from_fn(shape, |i| ((i * 7919 % 1000) as f32 / 500.0 - 1.0) * scale)
}

fn conv(c: &mut Criterion) {
    let x = ramp(&[32, 32, 32, 32], 1.0);
    let k = ramp(&[32, 32, 3, 3], 0.1);
    let y = conv2d_forward(Exec::Sequential, &x, &k, 2).unwrap();
    let dy = y.data().to_vec();

    let mut group = c.benchmark_group("conv2d_32x32x32_batch32");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| conv2d_forward(exec, black_box(&x), &k, 2).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward", name), |b| {
            b.iter(|| conv2d_backward(exec, black_box(&x), &k, 2, &dy, true, true).unwrap())
        });
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let params = init_network::<f32>(&GdNetConfig::default(), 1).unwrap();
    let objects: Vec<Vec<Tensor<f32>>> = (0..16)
        .map(|o| (0..5).map(|v| ramp(&[1, 32, 32], 1.0 + (o * 5 + v) as f32 * 0.01)).collect())
        .collect();

    let mut group = c.benchmark_group("predict_16_objects_5_views");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(name, |b| {
            b.iter(|| params.predict_many(exec, black_box(&objects)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conv, inference);
criterion_main!(benches);
