use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dcd_bench::{fixture, sizes};
use dcd_core::elbo::LossWeights;
use dcd_core::model::GaussianNoise;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TURNS: usize = 12;

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("dialogue");
    group.sample_size(20);
    let w = LossWeights::default();
    for (name, cfg) in sizes() {
        let (model, d) = fixture(cfg, TURNS, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| model.forward(&d, &mut GaussianNoise(&mut rng), &w).unwrap())
        });
        group.bench_function(BenchmarkId::new("loss_and_grad", name), |b| {
            b.iter(|| {
                model
                    .loss_and_grad(&d, &mut GaussianNoise(&mut rng), &w)
                    .unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("predict", name), |b| {
            b.iter(|| model.predict(&d).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
