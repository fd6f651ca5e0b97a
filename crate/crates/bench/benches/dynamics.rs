use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use pcgen::{
    generate, make_toy_dataset, min_norm_solve, Activation, LayerSpec, ModeConfig, PcNetwork,
};

fn step_benchmark(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_nodes");
    for sizes in [vec![10, 5, 3], vec![784, 100, 100, 10]] {
        let net = PcNetwork::random(LayerSpec::stack(&sizes, Activation::Tanh), 1).unwrap();
        let input = DVector::from_element(sizes[0], 0.1);
        let target = DVector::from_element(sizes[sizes.len() - 1], 0.0);
        let cfg = ModeConfig::default().training();
        let label = sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-");
        group.bench_with_input(BenchmarkId::from_parameter(label), &net, |b, net| {
            let mut net = net.clone();
            b.iter(|| net.step_nodes(Some(&input), Some(&target), &cfg).unwrap());
        });
    }
    group.finish();
}

fn settle_benchmark(c: &mut Criterion) {
    let ds = make_toy_dataset(0, 30, 0.1, 3, 10).unwrap();
    let net = PcNetwork::random(LayerSpec::stack(&[10, 5, 3], Activation::Linear), 1).unwrap();
    let cfg = ModeConfig::default().with_lambda_x(0.05);
    c.bench_function("settle/toy-discriminative", |b| {
        let mut net = net.clone();
        let (x, _) = ds.pair(0);
        b.iter(|| {
            net.feedforward_init(x).unwrap();
            net.settle(Some(x), None, &cfg.discriminative()).unwrap()
        });
    });
    c.bench_function("generate/toy", |b| {
        let mut net = net.clone();
        let y = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        b.iter(|| generate(&mut net, &y, &cfg).unwrap());
    });
}

fn min_norm_benchmark(c: &mut Criterion) {
    let mut group = c.benchmark_group("min_norm_solve");
    for (n, m) in [(5, 10), (10, 784)] {
        let a = DMatrix::from_fn(n, m, |i, j| ((i * 31 + j * 17) as f64).sin());
        let b = DVector::from_fn(n, |i, _| i as f64);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{m}")), &(a, b), |bench, (a, b)| {
            bench.iter(|| min_norm_solve(a, b).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, step_benchmark, settle_benchmark, min_norm_benchmark);
criterion_main!(benches);
