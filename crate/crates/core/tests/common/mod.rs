#![allow(dead_code)]

use qrec_core::rng::SimRng;
use qrec_core::DenseMatrix;
use rand::Rng;

/// Uniform `[-1, 1]` entries, each kept with probability `density`; at least
/// one entry is nonzero.
pub fn random_matrix(rng: &mut SimRng, m: usize, n: usize, density: f64) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < density {
                a.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
    }
    if a.frobenius_norm() == 0.0 {
        a.set(rng.random_range(0..m), rng.random_range(0..n), 1.0);
    }
    a
}

pub fn random_vector(rng: &mut SimRng, n: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if x.iter().any(|v| *v != 0.0) {
            return x;
        }
    }
}

/// Counts of each index among `draws`.
pub fn histogram(draws: impl IntoIterator<Item = usize>, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n];
    for d in draws {
        counts[d] += 1;
    }
    counts
}

pub fn normalised_squares(x: &[f64]) -> Vec<f64> {
    let total: f64 = x.iter().map(|v| v * v).sum();
    x.iter().map(|v| v * v / total).collect()
}
