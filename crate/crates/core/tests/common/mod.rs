#![allow(dead_code)]

use gastl::numerics::{Matrix, Vector};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

pub fn central_diff(f: impl Fn(&Vector) -> f64, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_inf(a: &Vector, b: &Vector) -> f64 {
    let diff = (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    diff / b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
}

pub fn to_nalgebra(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(to_nalgebra(m)).eigenvalues.min()
}
