use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use factprobe::eval::{macro_f1, micro_f1};
use factprobe::features::SparseVector;
use factprobe::forest::{fit_forest, predict_forest, ForestConfig};
use factprobe::neural::{zeros_like, BiLstm, Tensor};
use factprobe::seed;
use rand::Rng;

fn sparse_rows(n: usize, dim: usize, labels: usize) -> (Vec<SparseVector>, Vec<usize>) {
    let mut rng = seed::rng(1);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..labels);
        let mut map = BTreeMap::new();
        for _ in 0..20 {
            *map.entry(rng.gen_range(0..dim as u32)).or_insert(0.0) += 1.0;
        }
        // one weakly informative feature per label
        if rng.gen_bool(0.7) {
            map.insert(label as u32, 3.0);
        }
        x.push(SparseVector::from_map(dim, map));
        y.push(label);
    }
    (x, y)
}

fn forest(c: &mut Criterion) {
    let (x, y) = sparse_rows(500, 2000, 5);
    let cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::best()
    };
    c.bench_function("forest fit 500x2000, 20 trees", |b| {
        b.iter(|| fit_forest(black_box(&x), &y, 5, &cfg).unwrap())
    });
    let model = fit_forest(&x, &y, 5, &cfg).unwrap();
    c.bench_function("forest predict 500 rows", |b| {
        b.iter(|| x.iter().map(|v| predict_forest(&model, black_box(v))[0]).sum::<f64>())
    });
}

fn lstm(c: &mut Criterion) {
    let mut rng = seed::rng(2);
    let net = BiLstm::new(50, 64, 1, 0.0, &mut rng);
    let x = Tensor::uniform(&[64, 50], 1.0, &mut rng);
    c.bench_function("bilstm forward 64x50 -> 2x64", |b| {
        b.iter(|| net.forward(black_box(&x), None))
    });
    let (out, cache) = net.forward(&x, None);
    let mut dout = out.clone();
    dout.fill(1.0);
    c.bench_function("bilstm backward 64 steps", |b| {
        b.iter(|| {
            let mut grad = zeros_like(&net);
            net.backward(&cache, black_box(&dout), &mut grad)
        })
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = seed::rng(3);
    let golds: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..6)).collect();
    let preds: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..6)).collect();
    let labels: Vec<usize> = (0..6).collect();
    c.bench_function("micro f1 10k", |b| {
        b.iter(|| micro_f1(black_box(&preds), &golds).unwrap())
    });
    c.bench_function("macro f1 10k", |b| {
        b.iter(|| macro_f1(black_box(&preds), &golds, &labels).unwrap())
    });
}

criterion_group!(benches, forest, lstm, metrics);
criterion_main!(benches);
