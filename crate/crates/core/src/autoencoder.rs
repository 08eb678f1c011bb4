//! Single-hidden-layer sigmoid autoencoder: forward pass, the reconstruction,
//! cross-domain and graph loss terms, and the analytic gradient of their
//! weighted sum with respect to the network parameters.

use ndarray::{s, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, sigmoid_inplace, trace_quadratic, Matrix, Vector};

/// Encoder `W1 (m×d), b1 (m)` and decoder `W2 (d×m), b2 (d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
}

impl AutoencoderParams {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            w1: Matrix::zeros((m, d)),
            b1: Vector::zeros(m),
            w2: Matrix::zeros((d, m)),
            b2: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    /// `2md + m + d`.
    pub fn n_params(&self) -> usize {
        let (m, d) = (self.hidden(), self.dim());
        2 * m * d + m + d
    }

    /// Flattens as `W1` row-major, `W2` row-major, `b1`, `b2`.
    pub fn to_flat(&self) -> Vector {
        self.w1
            .iter()
            .chain(self.w2.iter())
            .chain(self.b1.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn from_flat(d: usize, m: usize, flat: &[f64]) -> Result<Self> {
        let expected = 2 * m * d + m + d;
        if flat.len() != expected {
            return Err(Error::dims(
                "autoencoder parameter vector",
                expected,
                flat.len(),
            ));
        }
        let (w1, rest) = flat.split_at(m * d);
        let (w2, rest) = rest.split_at(d * m);
        let (b1, b2) = rest.split_at(m);
        Ok(Self {
            w1: Matrix::from_shape_vec((m, d), w1.to_vec()).expect("length checked"),
            w2: Matrix::from_shape_vec((d, m), w2.to_vec()).expect("length checked"),
            b1: Vector::from(b1.to_vec()),
            b2: Vector::from(b2.to_vec()),
        })
    }

    fn check_input(&self, x: &ArrayView2<f64>, context: &'static str) -> Result<()> {
        if x.nrows() != self.dim() {
            return Err(Error::dims(context, self.dim(), x.nrows()));
        }
        Ok(())
    }
}

/// Weights uniform in `±√(6/(d+m))`, biases zero.
pub fn init_params(d: usize, m: usize, seed: u64) -> Result<AutoencoderParams> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "autoencoder sizes must be positive (d={d}, m={m})"
        )));
    }
    let r = (6.0 / (d + m) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = AutoencoderParams::zeros(d, m);
    p.w1.mapv_inplace(|_| rng.random_range(-r..=r));
    p.w2.mapv_inplace(|_| rng.random_range(-r..=r));
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Hidden activations, `m × n`.
    pub hidden: Matrix,
    /// Reconstructions `h(X)`, `d × n`.
    pub output: Matrix,
}

pub fn forward(theta: &AutoencoderParams, x: &ArrayView2<f64>) -> Result<ForwardCache> {
    theta.check_input(x, "forward input features")?;
    let mut hidden = theta.w1.dot(x) + theta.b1.view().insert_axis(Axis(1));
    sigmoid_inplace(&mut hidden);
    let mut output = theta.w2.dot(&hidden) + theta.b2.view().insert_axis(Axis(1));
    sigmoid_inplace(&mut output);
    Ok(ForwardCache { hidden, output })
}

/// `(1/2n) ‖X − h(X)‖²_F`.
pub fn recon_loss(theta: &AutoencoderParams, x: &ArrayView2<f64>) -> Result<f64> {
    let fc = forward(theta, x)?;
    Ok(frobenius_sq(&(x - &fc.output).view()) / (2.0 * x.ncols() as f64))
}

fn check_mapping(
    a: &ArrayView2<f64>,
    x_src: &ArrayView2<f64>,
    x_trg: &ArrayView2<f64>,
) -> Result<()> {
    if x_src.nrows() != x_trg.nrows() {
        return Err(Error::dims(
            "source/target features",
            x_trg.nrows(),
            x_src.nrows(),
        ));
    }
    if a.dim() != (x_src.ncols(), x_trg.ncols()) {
        return Err(Error::dims(
            "transform matrix",
            format!("{}x{}", x_src.ncols(), x_trg.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

/// `(1/2n_trg) ‖X_src A − h(X_trg)‖²_F`.
pub fn cross_loss(
    theta: &AutoencoderParams,
    a: &ArrayView2<f64>,
    x_src: &ArrayView2<f64>,
    x_trg: &ArrayView2<f64>,
) -> Result<f64> {
    check_mapping(a, x_src, x_trg)?;
    let fc = forward(theta, x_trg)?;
    let resid = x_src.dot(a) - &fc.output;
    Ok(frobenius_sq(&resid.view()) / (2.0 * x_trg.ncols() as f64))
}

/// `Tr(Z L Zᵀ)` over the hidden activations `Z` of `x`.
pub fn graph_loss(
    theta: &AutoencoderParams,
    x: &ArrayView2<f64>,
    laplacian: &ArrayView2<f64>,
) -> Result<f64> {
    if laplacian.dim() != (x.ncols(), x.ncols()) {
        return Err(Error::dims(
            "laplacian",
            format!("{0}x{0}", x.ncols()),
            format!("{}x{}", laplacian.nrows(), laplacian.ncols()),
        ));
    }
    let fc = forward(theta, x)?;
    Ok(trace_quadratic(&fc.hidden.view(), laplacian))
}

/// Value and gradient of `ℒ(Θ) + μ𝒞(Θ,A) + γ𝒢(Θ)` with `A` held fixed.
///
/// `laplacian` is over the combined sample set `[X_src X_trg]`. The gradient
/// is flattened in [`AutoencoderParams::to_flat`] order.
pub fn f1_value_and_gradient(
    theta: &AutoencoderParams,
    a: &ArrayView2<f64>,
    x_src: &ArrayView2<f64>,
    x_trg: &ArrayView2<f64>,
    laplacian: &ArrayView2<f64>,
    mu: f64,
    gamma: f64,
) -> Result<(f64, Vector)> {
    check_mapping(a, x_src, x_trg)?;
    if !(mu >= 0.0 && gamma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "balance weights must be non-negative (mu={mu}, gamma={gamma})"
        )));
    }
    let n_src = x_src.ncols();
    let n_trg = x_trg.ncols();
    let n = n_src + n_trg;
    if laplacian.dim() != (n, n) {
        return Err(Error::dims(
            "laplacian",
            format!("{n}x{n}"),
            format!("{}x{}", laplacian.nrows(), laplacian.ncols()),
        ));
    }
    let x = ndarray::concatenate(Axis(1), &[x_src.view(), x_trg.view()])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let ForwardCache {
        hidden: z,
        output: h,
    } = forward(theta, &x.view())?;

    // reconstruction term over all samples
    let recon_resid = &h - &x;
    let recon = frobenius_sq(&recon_resid.view()) / (2.0 * n as f64);

    // cross-domain term over target columns
    let h_trg = h.slice(s![.., n_src..]);
    let cross_resid = &h_trg - &x_src.dot(a);
    let cross = frobenius_sq(&cross_resid.view()) / (2.0 * n_trg as f64);

    let zl = if gamma > 0.0 {
        Some(z.dot(laplacian))
    } else {
        None
    };
    let graph = zl.as_ref().map_or(0.0, |zl| {
        Zip::from(zl).and(&z).fold(0.0, |acc, p, q| acc + p * q)
    });

    let value = recon + mu * cross + gamma * graph;

    // output-layer error terms: ∂F1/∂(W2 Z + b2)
    let mut d_out = recon_resid / n as f64;
    d_out
        .slice_mut(s![.., n_src..])
        .scaled_add(mu / n_trg as f64, &cross_resid);
    Zip::from(&mut d_out)
        .and(&h)
        .for_each(|d, &hv| *d *= hv * (1.0 - hv));
    ensure_block_finite(&d_out, "output-layer error")?;

    // hidden-layer error terms: ∂F1/∂(W1 X + b1)
    let mut d_hid = theta.w2.t().dot(&d_out);
    if let Some(zl) = &zl {
        d_hid.scaled_add(2.0 * gamma, zl);
    }
    Zip::from(&mut d_hid)
        .and(&z)
        .for_each(|d, &zv| *d *= zv * (1.0 - zv));
    ensure_block_finite(&d_hid, "hidden-layer error")?;

    let g_w1 = d_hid.dot(&x.t());
    let g_w2 = d_out.dot(&z.t());
    let g_b1 = d_hid.sum_axis(Axis(1));
    let g_b2 = d_out.sum_axis(Axis(1));

    let grad: Vector = g_w1
        .iter()
        .chain(g_w2.iter())
        .chain(g_b1.iter())
        .chain(g_b2.iter())
        .copied()
        .collect();
    if !value.is_finite() {
        return Err(Error::Numerical("F1 objective value is not finite".into()));
    }
    Ok((value, grad))
}

fn ensure_block_finite(m: &Matrix, block: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite entries in {block} block"
        )))
    }
}
