//! Minimal full-precision matrix helpers shared by the transform and
//! analysis code. Accumulation is always f64 regardless of storage type.

use crate::tensor::Tensor;

/// `a (m x k) * b (k x n)` with f64 accumulation; caller checks shapes.
pub(crate) fn matmul_f64(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        let arow = a.row(i);
        for l in 0..k {
            let av = arow[l] as f64;
            if av == 0.0 {
                continue;
            }
            let brow = b.row(l);
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j] as f64;
            }
        }
    }
    out
}

pub(crate) fn frobenius(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
