//! Rotation costs: building the randomized Hadamard and greedy
//! outlier-aware rotations, and applying a block rotation across a
//! full activation matrix.

use criterion::{criterion_group, criterion_main, Criterion};
use mxq_bench::outlier_activations;
use mxq_core::{
    apply_block_rotation, build_outlier_aware_rotation, hadamard_rotation,
    select_reference_block, ApplySide,
};

fn bench_rotation(c: &mut Criterion) {
    let x = outlier_activations(256, 1024, 1);
    let ref_block = select_reference_block(&x, 32).unwrap();
    let calib = x.column_block(ref_block, 32).unwrap();

    let mut group = c.benchmark_group("rotation");
    group.bench_function("build_hadamard_b32", |b| {
        b.iter(|| hadamard_rotation(32, 3, true).unwrap())
    });
    group.bench_function("build_outlier_aware_b32_steps128", |b| {
        b.iter(|| build_outlier_aware_rotation(&calib, 7, 128).unwrap())
    });

    let rot = hadamard_rotation(32, 3, true).unwrap();
    group.bench_function("apply_256x1024_b32", |b| {
        b.iter(|| apply_block_rotation(&x, &rot, ApplySide::ActivationRight).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_rotation);
criterion_main!(benches);
