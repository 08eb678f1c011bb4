//! Row-sparse transform between source and target samples.
//!
//! Minimizes `F2(A) = μ/(2 n_trg) ‖X_src A − H‖²_F + λ ‖A‖_{2,1}` by
//! iteratively reweighted least squares: a diagonal weight `U` with one entry
//! per row of `A`, alternated with the closed-form solve
//! `A = (μ X_srcᵀX_src + n_trg λ U)⁻¹ μ X_srcᵀ H`.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, frobenius_sq, row_norms, Matrix, Vector};

/// `n_src × n_trg` map from source samples to target reconstructions. The
/// Euclidean norm of row `i` scores the relevance of source sample `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformMatrix(pub Matrix);

impl TransformMatrix {
    pub fn zeros(n_src: usize, n_trg: usize) -> Self {
        Self(Matrix::zeros((n_src, n_trg)))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row_norms(&self) -> Vector {
        row_norms(&self.0.view())
    }

    pub fn l21(&self) -> f64 {
        self.row_norms().sum()
    }
}

/// Diagonal of the reweighting matrix, one entry per source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightDiagonal {
    pub u: Vector,
    pub epsilon: f64,
}

/// `1/(‖A_i‖ + ε)` for nonzero rows, `0` for zero rows.
pub fn update_u(a: &TransformMatrix, epsilon: f64) -> Result<ReweightDiagonal> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let u = a
        .row_norms()
        .mapv(|r| if r != 0.0 { 1.0 / (r + epsilon) } else { 0.0 });
    Ok(ReweightDiagonal { u, epsilon })
}

/// `F2(A)` for target matrix `h` (`d × n_trg`).
pub fn f2_objective(
    x_src: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    a: &TransformMatrix,
    mu: f64,
    lambda: f64,
) -> f64 {
    let resid = x_src.dot(&a.0) - h;
    mu * frobenius_sq(&resid.view()) / (2.0 * h.ncols() as f64) + lambda * a.l21()
}

fn check_inputs(x_src: &ArrayView2<f64>, h: &ArrayView2<f64>, mu: f64, lambda: f64) -> Result<()> {
    if x_src.nrows() != h.nrows() {
        return Err(Error::dims(
            "target matrix features",
            x_src.nrows(),
            h.nrows(),
        ));
    }
    if h.ncols() == 0 || x_src.ncols() == 0 {
        return Err(Error::InvalidInput("empty source or target matrix".into()));
    }
    if !(mu > 0.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need mu > 0 and lambda >= 0 (mu={mu}, lambda={lambda})"
        )));
    }
    Ok(())
}

/// Closed-form minimizer of the reweighted quadratic for fixed `U`.
///
/// A singular system is retried once with a ridge of `1e-10 · tr/n_src`.
pub fn solve_a_given_u(
    x_src: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    u: &ReweightDiagonal,
    mu: f64,
    lambda: f64,
) -> Result<TransformMatrix> {
    check_inputs(x_src, h, mu, lambda)?;
    let n_src = x_src.ncols();
    if u.u.len() != n_src {
        return Err(Error::dims("reweight diagonal", n_src, u.u.len()));
    }
    let n_trg = h.ncols() as f64;
    let mut system = x_src.t().dot(x_src) * mu;
    for (i, &ui) in u.u.iter().enumerate() {
        system[[i, i]] += n_trg * lambda * ui;
    }
    let rhs = x_src.t().dot(h) * mu;

    let factor = match cholesky(&system.view()) {
        Ok(l) => l,
        Err(_) => {
            let ridge = 1e-10 * system.diag().sum() / n_src as f64;
            for i in 0..n_src {
                system[[i, i]] += ridge;
            }
            cholesky(&system.view()).map_err(|pivot| {
                Error::Numerical(format!(
                    "transform system is singular after ridge {ridge:e} (smallest pivot {pivot:e})"
                ))
            })?
        }
    };
    Ok(TransformMatrix(cholesky_solve(&factor, &rhs.view())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub epsilon: f64,
    /// Relative change in `F2` that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            tol: 1e-6,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsOutcome {
    pub a: TransformMatrix,
    /// `F2` at the starting point, then after each accepted update.
    pub history: Vec<f64>,
}

/// IRLS from the plain least-squares start (`U = 0`).
pub fn irls_solve(
    x_src: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    mu: f64,
    lambda: f64,
    opts: &IrlsOptions,
) -> Result<IrlsOutcome> {
    check_inputs(x_src, h, mu, lambda)?;
    let zero_u = ReweightDiagonal {
        u: Vector::zeros(x_src.ncols()),
        epsilon: opts.epsilon,
    };
    let start = solve_a_given_u(x_src, h, &zero_u, mu, lambda)?;
    irls_solve_from(x_src, h, mu, lambda, opts, start)
}

/// IRLS from a given transform. An update that would raise `F2` is rejected
/// and ends the iteration, so the history never increases.
pub fn irls_solve_from(
    x_src: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    mu: f64,
    lambda: f64,
    opts: &IrlsOptions,
    start: TransformMatrix,
) -> Result<IrlsOutcome> {
    check_inputs(x_src, h, mu, lambda)?;
    if start.0.dim() != (x_src.ncols(), h.ncols()) {
        return Err(Error::dims(
            "initial transform",
            format!("{}x{}", x_src.ncols(), h.ncols()),
            format!("{}x{}", start.0.nrows(), start.0.ncols()),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "IRLS tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let mut a = start;
    let mut value = f2_objective(x_src, h, &a, mu, lambda);
    let mut history = vec![value];
    for _ in 0..opts.max_iter {
        let u = update_u(&a, opts.epsilon)?;
        let next = solve_a_given_u(x_src, h, &u, mu, lambda)?;
        let next_value = f2_objective(x_src, h, &next, mu, lambda);
        if !next_value.is_finite() {
            return Err(Error::Numerical("F2 objective became non-finite".into()));
        }
        if next_value > value {
            break;
        }
        let change = value - next_value;
        let scale = value.abs().max(1.0);
        a = next;
        value = next_value;
        history.push(value);
        if change <= opts.tol * scale {
            break;
        }
    }
    Ok(IrlsOutcome { a, history })
}

/// `(μ/n_trg)(X_srcᵀX_src A − X_srcᵀH) + λ U A`, the gradient of the
/// reweighted objective; zero at the output of [`solve_a_given_u`].
pub fn stationarity_residual(
    x_src: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    a: &TransformMatrix,
    u: &ReweightDiagonal,
    mu: f64,
    lambda: f64,
) -> Matrix {
    let n_trg = h.ncols() as f64;
    let xtx_a = x_src.t().dot(&x_src.dot(&a.0));
    let xth = x_src.t().dot(h);
    let mut r = (xtx_a - xth) * (mu / n_trg);
    let ua = &a.0 * &u.u.view().insert_axis(Axis(1));
    r.scaled_add(lambda, &ua);
    r
}
