//! Dense kernels shared by the rest of the crate.
//!
//! Matrices are plain `ndarray::Array2<f64>`. Sample matrices store one
//! sample per column.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

pub(crate) fn ensure_finite(m: &ArrayView2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} contains non-finite entries"
        )))
    }
}

/// The entrywise `(r, p)` matrix norm: the `p`-norm of the vector of row
/// `r`-norms.
pub fn lrp_norm(w: &ArrayView2<f64>, r: f64, p: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) || !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "norm exponents must be positive and finite (r={r}, p={p})"
        )));
    }
    ensure_finite(w, "matrix")?;
    let total: f64 = w
        .axis_iter(Axis(0))
        .map(|row| {
            let inner: f64 = row.iter().map(|v| v.abs().powf(r)).sum();
            inner.powf(p / r)
        })
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Sum of the Euclidean norms of the rows.
pub fn l21_norm(w: &ArrayView2<f64>) -> Result<f64> {
    lrp_norm(w, 2.0, 1.0)
}

/// Row-wise Euclidean norms; no finiteness check.
pub fn row_norms(w: &ArrayView2<f64>) -> Vector {
    w.map_axis(Axis(1), |row| row.dot(&row).sqrt())
}

/// Squared Frobenius norm.
pub fn frobenius_sq(w: &ArrayView2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum()
}

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic function.
pub fn sigmoid(m: &ArrayView2<f64>) -> Matrix {
    m.mapv(sigmoid_scalar)
}

pub(crate) fn sigmoid_inplace(m: &mut Matrix) {
    m.mapv_inplace(sigmoid_scalar);
}

/// `Tr(A B Aᵀ)` for square `B`.
pub fn trace_quadratic(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    let ab = a.dot(b);
    Zip::from(&ab).and(a).fold(0.0, |acc, x, y| acc + x * y)
}

/// Infinity norm of a vector.
pub fn inf_norm(v: &ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Pivot threshold below which a Cholesky factorization is treated as singular,
/// relative to the largest diagonal entry.
const PIVOT_RTOL: f64 = 1e-13;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// On failure returns the offending (pre-sqrt) pivot value.
pub(crate) fn cholesky(m: &ArrayView2<f64>) -> std::result::Result<Matrix, f64> {
    let n = m.nrows();
    let max_diag = m.diag().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let floor = PIVOT_RTOL * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros((n, n));
    for j in 0..n {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > floor) {
            return Err(d);
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` given the Cholesky factor `L`.
pub(crate) fn cholesky_solve(l: &Matrix, b: &ArrayView2<f64>) -> Matrix {
    let n = l.nrows();
    let mut x = b.to_owned();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn lrp_norm_examples() {
        let z = Matrix::zeros((2, 2));
        assert_eq!(lrp_norm(&z.view(), 2.0, 1.0).unwrap(), 0.0);
        let w = array![[3.0, 4.0], [0.0, 0.0]];
        assert!((lrp_norm(&w.view(), 2.0, 1.0).unwrap() - 5.0).abs() < 1e-15);
        let eye = Matrix::eye(2);
        let fro = lrp_norm(&eye.view(), 2.0, 2.0).unwrap();
        assert!((fro - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l21_examples() {
        assert_eq!(
            l21_norm(&array![[3.0, 4.0], [0.0, 0.0]].view()).unwrap(),
            5.0
        );
        assert_eq!(l21_norm(&Matrix::zeros((3, 4)).view()).unwrap(), 0.0);
        assert_eq!(l21_norm(&Matrix::eye(2).view()).unwrap(), 2.0);
    }

    #[test]
    fn non_finite_rejected() {
        let w = array![[1.0, f64::NAN]];
        assert!(matches!(l21_norm(&w.view()), Err(Error::InvalidInput(_))));
        let w = array![[1.0, f64::INFINITY]];
        assert!(lrp_norm(&w.view(), 1.0, 1.0).is_err());
        assert!(lrp_norm(&Matrix::eye(2).view(), 0.0, 1.0).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let s = sigmoid_scalar(50.0);
        assert!(1.0 - s < 1e-20);
        assert!((sigmoid_scalar(1.7) + sigmoid_scalar(-1.7) - 1.0).abs() < 1e-15);
        // no overflow on the negative branch
        assert!(sigmoid_scalar(-800.0) >= 0.0);
        assert!(sigmoid_scalar(-800.0).is_finite());
    }

    #[test]
    fn sigmoid_derivative_matches_finite_difference() {
        for &z in &[-6.0, -1.3, 0.0, 0.4, 2.2, 7.5] {
            let s = sigmoid_scalar(z);
            let h = 1e-6;
            let fd = (sigmoid_scalar(z + h) - sigmoid_scalar(z - h)) / (2.0 * h);
            assert!((s * (1.0 - s) - fd).abs() < 1e-6, "z={z}");
        }
    }

    #[test]
    fn trace_quadratic_matches_explicit() {
        let a = array![[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]];
        let b = array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        let explicit = a.dot(&b).dot(&a.t()).diag().sum();
        assert!((trace_quadratic(&a.view(), &b.view()) - explicit).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let m = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]];
        let l = cholesky(&m.view()).unwrap();
        let x = cholesky_solve(&l, &b.view());
        let r = m.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_flags_singular() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky(&m.view()).is_err());
    }

    fn small_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |v| Matrix::from_shape_vec((r, c), v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn l21_is_lrp_2_1(w in small_matrix()) {
            prop_assert_eq!(lrp_norm(&w.view(), 2.0, 1.0).unwrap(), l21_norm(&w.view()).unwrap());
        }

        #[test]
        fn lrp_is_absolutely_homogeneous(
            w in small_matrix(),
            c in -5.0f64..5.0,
            r in 0.5f64..4.0,
            p in 0.5f64..4.0,
        ) {
            let base = lrp_norm(&w.view(), r, p).unwrap();
            let scaled = lrp_norm(&(&w * c).view(), r, p).unwrap();
            let expected = c.abs() * base;
            prop_assert!((scaled - expected).abs() <= 1e-12 * expected.max(1e-300));
        }

        #[test]
        fn sigmoid_in_unit_interval(z in -30.0f64..30.0) {
            let s = sigmoid_scalar(z);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
