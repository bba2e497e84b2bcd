//! Whole-pipeline cost: transform + quantize + analyze for each of the
//! four comparison pipelines on a small activation/weight pair.

use criterion::{criterion_group, criterion_main, Criterion};
use mxq_bench::{outlier_activations, plain_weights};
use mxq_core::{run_pipeline, PipelineConfig, TransformKind};

fn bench_pipeline(c: &mut Criterion) {
    let x = outlier_activations(128, 256, 1);
    let w = plain_weights(256, 64, 101);

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(20);
    for kind in TransformKind::ALL {
        let mut config = PipelineConfig::new(kind);
        config.alpha = 0.75;
        config.seed = 1;
        group.bench_function(kind.name(), |b| {
            b.iter(|| run_pipeline(&x, &w, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
