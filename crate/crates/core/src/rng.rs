//! Seeded random matrices. One generator per run, consumed in row-major order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::linalg::Matrix;

pub type PilRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PilRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries i.i.d. uniform on `[lo, hi)`. Panics if `lo >= hi` or either
/// bound is non-finite; callers validate intervals first.
pub fn uniform_matrix(rng: &mut PilRng, rows: usize, cols: usize, (lo, hi): (f64, f64)) -> Matrix {
    let dist = Uniform::new(lo, hi).expect("valid uniform interval");
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_row_slice(rows, cols, &data).expect("finite samples")
}

/// Entries i.i.d. `N(0, stddev²)`. `stddev = 0` yields the zero matrix
/// without touching the generator.
pub fn gaussian_matrix(rng: &mut PilRng, rows: usize, cols: usize, stddev: f64) -> Matrix {
    if stddev == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let dist = Normal::new(0.0, stddev).expect("finite non-negative stddev");
    let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_row_slice(rows, cols, &data).expect("finite samples")
}
