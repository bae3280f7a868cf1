//! Synthetic inputs shared by the benchmarks.

use log1p_nmf::{CountMatrix, FactorModel, Link};
use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An `n × m` count matrix with exactly `nnz_per_row` non-zero entries per
/// row, and a rank-`k` model of matching shape under the shifted-log link.
pub fn sparse_instance(
    n: usize,
    m: usize,
    k: usize,
    nnz_per_row: usize,
    c: f64,
    seed: u64,
) -> (CountMatrix, FactorModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(n * nnz_per_row);
    for i in 0..n {
        for j in sample(&mut rng, m, nnz_per_row.min(m)) {
            triplets.push((i, j, rng.random_range(1..6)));
        }
    }
    let y = CountMatrix::from_triplets(n, m, &triplets).expect("indices in range");
    let l = Array2::from_shape_simple_fn((n, k), || rng.random_range(0.01..0.3));
    let f = Array2::from_shape_simple_fn((m, k), || rng.random_range(0.01..0.3));
    let model = FactorModel::new(l, f, Link::shifted_log(c).expect("positive c")).expect("consistent shapes");
    (y, model)
}
