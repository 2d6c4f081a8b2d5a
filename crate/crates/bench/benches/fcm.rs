use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use webprof_core::fcm::{
    objective, run_fcm_dense, update_centers, update_memberships, FcmConfig,
};
use webprof_core::synth::gaussian_blobs;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blob_data() -> (ndarray::Array2<f64>, Vec<f64>) {
    let centers: Vec<[f64; 2]> = (0..8)
        .map(|k| [(k % 4) as f64 * 15.0, (k / 4) as f64 * 15.0])
        .collect();
    let x = gaussian_blobs(&centers, 64, 0.8, 7);
    let weights = vec![1.0; x.nrows()];
    (x, weights)
}

fn bench_updates(c: &mut Criterion) {
    let (x, weights) = blob_data();
    let cfg = FcmConfig::new(8, 3);
    let model = run_fcm_dense(&x, &weights, &cfg).unwrap();
    let (u, v) = (model.memberships, model.centers);

    c.bench_function("update_memberships 512x2 c8", |b| {
        b.iter(|| update_memberships(black_box(&x), black_box(&v), &weights, 2.0))
    });
    c.bench_function("update_centers 512x2 c8", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| update_centers(black_box(&x), black_box(&u), &weights, 2.0, &mut rng))
    });
    c.bench_function("objective 512x2 c8", |b| {
        b.iter(|| objective(black_box(&x), black_box(&u), black_box(&v), &weights, 2.0))
    });
}

fn bench_full_fit(c: &mut Criterion) {
    let (x, weights) = blob_data();
    c.bench_function("run_fcm 512x2 c8", |b| {
        b.iter(|| run_fcm_dense(black_box(&x), &weights, &FcmConfig::new(8, 3)).unwrap())
    });
}

criterion_group!(benches, bench_updates, bench_full_fit);
criterion_main!(benches);
