#![allow(dead_code)]

use pilkit::rng::{seeded, uniform_matrix};
use pilkit::{Dataset, Matrix, TargetEncoding};

/// One-sided Jacobi SVD on plain row vectors, independent of the library's
/// nalgebra path. Returns singular values (descending) and, when asked, the
/// pseudoinverse built from the rotated columns.
pub struct JacobiSvd {
    pub singular_values: Vec<f64>,
    rows: usize,
    cols: usize,
    // columns of A·V after convergence, and V itself
    av: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl JacobiSvd {
    pub fn new(a: &Matrix) -> Self {
        // work on the wide-or-square orientation with columns >= rows handled
        // by plain one-sided sweeps over columns
        let (rows, cols) = a.shape();
        let mut u: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| a.get(i, j)).collect()).collect();
        let mut v: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _sweep in 0..100 {
            let mut rotated = false;
            for p in 0..cols {
                for q in p + 1..cols {
                    let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                    let beta: f64 = u[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(&mut u, p, q, c, s);
                    rotate(&mut v, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let mut sv: Vec<f64> = u.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv.truncate(rows.min(cols));
        JacobiSvd {
            singular_values: sv,
            rows,
            cols,
            av: u,
            v,
        }
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    pub fn default_tol(&self) -> f64 {
        self.rows.max(self.cols) as f64 * self.singular_values.first().copied().unwrap_or(0.0) * f64::EPSILON
    }

    /// A⁺ = Σ_j v_j (A v_j)ᵀ / σ_j² over retained columns.
    pub fn pinv(&self, tol: f64) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.rows]; self.cols];
        for (col, vj) in self.av.iter().zip(&self.v) {
            let s2: f64 = col.iter().map(|x| x * x).sum();
            if s2.sqrt() <= tol {
                continue;
            }
            for (r, vr) in vj.iter().enumerate() {
                for (c, ac) in col.iter().enumerate() {
                    out[r][c] += vr * ac / s2;
                }
            }
        }
        out
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Random regression dataset with `n` distinct rows of `d` raw features in
/// `[-1, 1)` and `m` targets in `[-0.8, 0.8)`.
pub fn random_dataset(seed: u64, n: usize, d: usize, m: usize) -> Dataset {
    let mut rng = seeded(seed);
    let x = uniform_matrix(&mut rng, n, d, (-1.0, 1.0));
    let t = uniform_matrix(&mut rng, n, m, (-0.8, 0.8));
    Dataset::new(x, t, TargetEncoding::regression_raw(), format!("random-{seed}")).unwrap()
}

pub fn xor() -> Dataset {
    let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
    let t = Matrix::from_rows(&[[-0.8], [0.8], [0.8], [-0.8]]).unwrap();
    Dataset::new(x, t, TargetEncoding::regression_raw(), "xor").unwrap()
}

/// `A = B C` with inner dimension `rank`.
pub fn low_rank(seed: u64, rows: usize, cols: usize, rank: usize) -> Matrix {
    let mut rng = seeded(seed);
    let b = uniform_matrix(&mut rng, rows, rank, (-1.0, 1.0));
    let c = uniform_matrix(&mut rng, rank, cols, (-1.0, 1.0));
    b.matmul(&c).unwrap()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
