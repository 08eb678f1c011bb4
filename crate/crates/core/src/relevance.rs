//! Source-sample weights, transferability to target classes, pseudo-labels
//! and top-p selection, all derived from a fitted transfer model.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{forward, AutoencoderParams};
use crate::error::{Error, Result};
use crate::l21solver::TransformMatrix;
use crate::numerics::{Matrix, Vector};

/// Per-source-sample weights in `[0, 1]`: row norms of the transform scaled
/// so the largest is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceWeights(pub Vector);

impl RelevanceWeights {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0.0)
    }
}

pub fn source_weights(a: &TransformMatrix) -> RelevanceWeights {
    let norms = a.row_norms();
    let max = norms.iter().fold(0.0_f64, |m, &v| m.max(v));
    if max > 0.0 {
        RelevanceWeights(norms / max)
    } else {
        RelevanceWeights(Vector::zeros(norms.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Class-restricted squared row norms of the transform.
    A,
    /// Isotropic Gaussian density of hidden codes around target class means.
    B,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            other => Err(Error::InvalidInput(format!(
                "unknown scheme {other:?} (expected A or B)"
            ))),
        }
    }
}

/// `n_src × n_classes` transferability scores, kept alongside their logs so
/// that Gaussian densities in high dimension stay usable after underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferabilityMatrix {
    pub values: Matrix,
    pub log_values: Matrix,
    pub scheme: Scheme,
}

fn check_labels(labels: &[usize], n_classes: usize, expected_len: usize) -> Result<()> {
    if labels.len() != expected_len {
        return Err(Error::dims("target labels", expected_len, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

/// `Tr(i, j) = Σ_{t: y(t)=j} A(i,t)²`.
pub fn transferability_scheme_a(
    a: &TransformMatrix,
    y_trg: &[usize],
    n_classes: usize,
) -> Result<TransferabilityMatrix> {
    check_labels(y_trg, n_classes, a.0.ncols())?;
    let mut values = Matrix::zeros((a.0.nrows(), n_classes));
    for (t, &class) in y_trg.iter().enumerate() {
        let col = a.0.column(t);
        let mut out = values.column_mut(class);
        out.zip_mut_with(&col, |acc, &v| *acc += v * v);
    }
    let log_values = values.mapv(f64::ln);
    Ok(TransferabilityMatrix {
        values,
        log_values,
        scheme: Scheme::A,
    })
}

/// `Tr(i, j) = N(z_i | z̄_j, σ²I)` with `z` the hidden code and `z̄_j` the mean
/// code of target training class `j`.
pub fn transferability_scheme_b(
    theta: &AutoencoderParams,
    x_src: &ArrayView2<f64>,
    x_trg: &ArrayView2<f64>,
    y_trg: &[usize],
    n_classes: usize,
    sigma2: f64,
) -> Result<TransferabilityMatrix> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    check_labels(y_trg, n_classes, x_trg.ncols())?;
    let z_src = forward(theta, x_src)?.hidden;
    let z_trg = forward(theta, x_trg)?.hidden;
    let m = z_src.nrows();

    let mut means = Matrix::zeros((m, n_classes));
    let mut counts = vec![0usize; n_classes];
    for (t, &class) in y_trg.iter().enumerate() {
        let mut col = means.column_mut(class);
        col += &z_trg.column(t);
        counts[class] += 1;
    }
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::InvalidInput(format!(
                "target class {j} has no samples"
            )));
        }
        means.column_mut(j).mapv_inplace(|v| v / c as f64);
    }

    let log_norm = -0.5 * m as f64 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let log_values = Matrix::from_shape_fn((z_src.ncols(), n_classes), |(i, j)| {
        let diff = &z_src.column(i) - &means.column(j);
        log_norm - diff.dot(&diff) / (2.0 * sigma2)
    });
    let values = log_values.mapv(f64::exp);
    Ok(TransferabilityMatrix {
        values,
        log_values,
        scheme: Scheme::B,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Soft,
    Hard,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(LabelMode::Soft),
            "hard" => Ok(LabelMode::Hard),
            other => Err(Error::InvalidInput(format!(
                "unknown mode {other:?} (expected soft or hard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelMatrix {
    pub labels: Matrix,
    pub mode: LabelMode,
}

/// Hard: one-hot at the row argmax, ties to the lower class. Soft: rows
/// normalized to sum to one; rows with no mass become uniform.
pub fn pseudo_labels(tr: &TransferabilityMatrix, mode: LabelMode) -> PseudoLabelMatrix {
    let (n, c) = tr.log_values.dim();
    let mut labels = Matrix::zeros((n, c));
    for (i, row) in tr.log_values.axis_iter(Axis(0)).enumerate() {
        let (best, max) =
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bi, bv)
                    }
                });
        let mut out = labels.row_mut(i);
        match mode {
            LabelMode::Hard => out[best] = 1.0,
            LabelMode::Soft if max == f64::NEG_INFINITY => out.fill(1.0 / c as f64),
            LabelMode::Soft => {
                out.assign(&row.mapv(|v| (v - max).exp()));
                let total = out.sum();
                out /= total;
            }
        }
    }
    PseudoLabelMatrix { labels, mode }
}

/// Indices of the `p` largest weights, largest first, ties to the lower index.
pub fn select_top_p(wt: &RelevanceWeights, p: usize) -> Result<Vec<usize>> {
    if p > wt.len() {
        return Err(Error::InvalidInput(format!(
            "cannot select {p} of {} source samples",
            wt.len()
        )));
    }
    let mut idx: Vec<usize> = (0..wt.len()).collect();
    idx.sort_by(|&a, &b| wt.0[b].total_cmp(&wt.0[a]).then(a.cmp(&b)));
    idx.truncate(p);
    Ok(idx)
}

/// One row per source sample: index, weight, selection rank (empty when not
/// selected), transferability columns, pseudo-label columns.
pub fn write_relevance_csv(
    path: impl AsRef<Path>,
    wt: &RelevanceWeights,
    tr: &TransferabilityMatrix,
    labels: &PseudoLabelMatrix,
    selected: &[usize],
) -> Result<()> {
    let path = path.as_ref();
    let n = wt.len();
    if tr.values.nrows() != n || labels.labels.nrows() != n {
        return Err(Error::dims("relevance table rows", n, tr.values.nrows()));
    }
    let c = tr.values.ncols();
    let mut rank = vec![None; n];
    for (r, &i) in selected.iter().enumerate() {
        rank[i] = Some(r);
    }
    let mut out = String::from("#source,weight,rank");
    for j in 0..c {
        write!(out, ",tr{j}").expect("string write");
    }
    for j in 0..c {
        write!(out, ",label{j}").expect("string write");
    }
    out.push('\n');
    for (i, r) in rank.iter().enumerate() {
        write!(out, "{i},{:.16e},", wt.0[i]).expect("string write");
        if let Some(r) = r {
            write!(out, "{r}").expect("string write");
        }
        for v in tr.values.row(i) {
            write!(out, ",{v:.16e}").expect("string write");
        }
        for v in labels.labels.row(i) {
            write!(out, ",{v:.16e}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
