//! Shared fixtures for the criterion benchmarks: seeded synthetic
//! activation/weight pairs with the outlier texture the transforms are
//! designed around.

use mxq_core::{generate_tensor, OutlierSpec, Tensor};

/// An activation matrix with both outlier kinds: a few persistently hot
/// channels and a handful of extreme isolated cells.
pub fn outlier_activations(rows: usize, cols: usize, seed: u64) -> Tensor {
    let spec = OutlierSpec {
        normal_fraction: 0.005,
        normal_magnitude: 10.0,
        massive_count: 8,
        massive_magnitude: 100.0,
        ..OutlierSpec::default()
    };
    generate_tensor(rows, cols, seed, &spec).expect("benchmark fixture generation failed")
}

/// A plain standard-normal weight matrix.
pub fn plain_weights(rows: usize, cols: usize, seed: u64) -> Tensor {
    generate_tensor(rows, cols, seed, &OutlierSpec::default())
        .expect("benchmark fixture generation failed")
}
