//! Fixed inputs shared by the benchmarks in `benches/`.

use nalgebra::DMatrix;
use rmtlab::{sample_symmetric, DistSpec, MatrixProfile, StreamKey, SymMatrix};

pub fn symmetric(n: usize, seed: u64) -> SymMatrix {
    sample_symmetric(&MatrixProfile::new(n, DistSpec::gaussian()), StreamKey::new(seed)).expect("valid profile")
}

/// Deterministic `rows x cols` matrix with entries in `[-1, 1]`.
pub fn dense(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| ((i * 31 + j * 17) as f64 * 0.618_033_988_75).sin())
}

/// Unit vector with irrational-looking coordinates.
pub fn unit_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (1..=n).map(|i| (i as f64).sqrt().fract() + 0.1).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}
