//! Batch SC evaluation of LeNet-5: sequential vs the rayon pool.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion};
use sc_cnn::batch::map_sequential;
use sc_cnn::io::{load_weights, Dataset};
use sc_cnn::nn::{normalize_weights, NormalizeOptions, ScEngine, ScParams};

const IMAGES: usize = 32;

fn setup() -> (ScEngine, Dataset) {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let net = load_weights(data.join("lenet5")).expect("bundled weights");
    let images = Dataset::load(
        data.join("mnist-1k/t1k-images-idx3-ubyte"),
        data.join("mnist-1k/t1k-labels-idx1-ubyte"),
    )
    .expect("bundled images")
    .truncated(IMAGES)
    .padded(32)
    .expect("28x28 fits 32x32");
    let spec = normalize_weights(&net, ScParams::default(), &NormalizeOptions::default())
        .expect("valid network");
    (ScEngine::new(spec).expect("valid spec"), images)
}

fn batch(c: &mut Criterion) {
    let (engine, images) = setup();
    let width = engine.spec().params.width;
    let forward = |i: usize| engine.forward(&images.levels(i, width));
    let mut group = c.benchmark_group(format!("lenet5_{IMAGES}_images"));
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| map_sequential(images.len(), forward).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| sc_cnn::batch::map_parallel(images.len(), 0, forward).unwrap())
    });
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
