//! Source/target sample sets, CSV I/O, min-max scaling and a synthetic
//! generator with known source relevance.
//!
//! On disk a sample is a row; in memory it is a column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Unlabeled source samples plus labeled target train/test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub x_src: Matrix,
    pub x_trg: Matrix,
    pub y_trg: Vec<usize>,
    pub x_test: Matrix,
    pub y_test: Vec<usize>,
    pub n_classes: usize,
}

impl DatasetBundle {
    /// Validates shapes and labels. `n_classes` is inferred from `y_trg`
    /// (largest label + 1) and every class must appear in `y_trg`.
    pub fn new(
        x_src: Matrix,
        x_trg: Matrix,
        y_trg: Vec<usize>,
        x_test: Matrix,
        y_test: Vec<usize>,
    ) -> Result<Self> {
        let d = x_src.nrows();
        if d == 0 || x_src.ncols() == 0 {
            return Err(Error::InvalidInput("source matrix is empty".into()));
        }
        if x_trg.ncols() == 0 {
            return Err(Error::InvalidInput(
                "target training matrix is empty".into(),
            ));
        }
        if x_trg.nrows() != d {
            return Err(Error::dims("target features", d, x_trg.nrows()));
        }
        if x_test.nrows() != d {
            return Err(Error::dims("test features", d, x_test.nrows()));
        }
        if y_trg.len() != x_trg.ncols() {
            return Err(Error::dims("target labels", x_trg.ncols(), y_trg.len()));
        }
        if y_test.len() != x_test.ncols() {
            return Err(Error::dims("test labels", x_test.ncols(), y_test.len()));
        }
        for (name, m) in [("source", &x_src), ("target", &x_trg), ("test", &x_test)] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} matrix has non-finite entries"
                )));
            }
        }
        let n_classes = y_trg.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        for &y in &y_trg {
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "class {missing} has no target training sample"
            )));
        }
        if let Some(&bad) = y_test.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "test label {bad} outside target classes 0..{n_classes}"
            )));
        }
        Ok(Self {
            x_src,
            x_trg,
            y_trg,
            x_test,
            y_test,
            n_classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_src.nrows()
    }

    pub fn n_src(&self) -> usize {
        self.x_src.ncols()
    }

    pub fn n_trg(&self) -> usize {
        self.x_trg.ncols()
    }

    /// `[X_src X_trg]`, the sample set the autoencoder and the graph see.
    pub fn combined(&self) -> Matrix {
        ndarray::concatenate(Axis(1), &[self.x_src.view(), self.x_trg.view()])
            .expect("shapes validated at construction")
    }

    /// Fits a scaler on source + target-training samples and applies it to
    /// all three matrices.
    pub fn scaled(&self) -> Result<(DatasetBundle, ScalingParams)> {
        let params = fit_scaler(&self.x_src, &self.x_trg)?;
        let bundle = DatasetBundle {
            x_src: apply_scaler(&self.x_src, &params)?,
            x_trg: apply_scaler(&self.x_trg, &params)?,
            y_trg: self.y_trg.clone(),
            x_test: apply_scaler(&self.x_test, &params)?,
            y_test: self.y_test.clone(),
            n_classes: self.n_classes,
        };
        Ok((bundle, params))
    }
}

/// Per-feature min-max scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    /// `max - min`; zero for constant features.
    pub range: Vec<f64>,
}

pub fn fit_scaler(x_src: &Matrix, x_trg: &Matrix) -> Result<ScalingParams> {
    if x_src.nrows() != x_trg.nrows() {
        return Err(Error::dims(
            "fit_scaler features",
            x_src.nrows(),
            x_trg.nrows(),
        ));
    }
    let d = x_src.nrows();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for m in [x_src, x_trg] {
        for (f, row) in m.axis_iter(Axis(0)).enumerate() {
            for &v in row {
                min[f] = min[f].min(v);
                max[f] = max[f].max(v);
            }
        }
    }
    let range = min
        .iter()
        .zip(&max)
        .map(|(lo, hi)| (hi - lo).max(0.0))
        .collect();
    Ok(ScalingParams { min, range })
}

/// `(x - min) / range` clipped to `[0, 1]`; constant features map to 0.5.
pub fn apply_scaler(x: &Matrix, s: &ScalingParams) -> Result<Matrix> {
    if x.nrows() != s.min.len() {
        return Err(Error::dims("apply_scaler features", s.min.len(), x.nrows()));
    }
    let mut out = x.clone();
    for (f, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (lo, range) = (s.min[f], s.range[f]);
        if range > 0.0 {
            row.mapv_inplace(|v| ((v - lo) / range).clamp(0.0, 1.0));
        } else {
            row.fill(0.5);
        }
    }
    Ok(out)
}

/// Reads a numeric CSV with one sample per row into a `d × n` matrix.
///
/// An optional first line starting with `#` is a header of column names.
/// With `label_column`, that column is split off as integer labels: it is
/// looked up by name when a header exists, otherwise the last column is used.
pub fn load_csv_matrix(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
) -> Result<(Matrix, Option<Vec<usize>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_matrix(&text, path, label_column)
}

fn parse_csv_matrix(
    text: &str,
    path: &Path,
    label_column: Option<&str>,
) -> Result<(Matrix, Option<Vec<usize>>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if rows.is_empty() && header.is_none() {
                header = Some(rest.split(',').map(|c| c.trim().to_string()).collect());
                continue;
            }
            return Err(parse_err(
                lineno,
                "header line must be the first line".into(),
            ));
        }
        let cells = line
            .split(',')
            .map(|c| {
                let c = c.trim();
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("non-numeric cell {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    lineno,
                    format!("ragged row: expected {w} cells, found {}", cells.len()),
                ))
            }
            _ => {}
        }
        rows.push(cells);
    }
    let Some(width) = width else {
        return Err(Error::InvalidInput(format!(
            "{} contains no samples",
            path.display()
        )));
    };
    if let Some(h) = &header {
        if h.len() != width {
            return Err(parse_err(
                1,
                format!("header has {} names for {width} columns", h.len()),
            ));
        }
    }

    let label_idx = match label_column {
        None => None,
        Some(name) => Some(match &header {
            Some(h) => h.iter().position(|c| c == name).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "label column {name:?} not in header of {}",
                    path.display()
                ))
            })?,
            None => width - 1,
        }),
    };
    let d = width - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(Error::InvalidInput(format!(
            "{} has no feature columns",
            path.display()
        )));
    }

    let n = rows.len();
    let mut x = Matrix::zeros((d, n));
    let mut labels = label_idx.map(|_| Vec::with_capacity(n));
    for (j, row) in rows.iter().enumerate() {
        let mut f = 0;
        for (c, &v) in row.iter().enumerate() {
            if Some(c) == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "label {v} in sample {j} of {} is not a non-negative integer",
                        path.display()
                    )));
                }
                labels.as_mut().expect("label column set").push(v as usize);
            } else {
                x[[f, j]] = v;
                f += 1;
            }
        }
    }
    Ok((x, labels))
}

/// Writes a `d × n` matrix as CSV, one sample per row, values printed with
/// 17 significant digits. Labels, when given, go to a trailing `y` column.
pub fn write_csv_matrix(
    path: impl AsRef<Path>,
    x: &Matrix,
    labels: Option<&[usize]>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != x.ncols() {
            return Err(Error::dims("write_csv_matrix labels", x.ncols(), l.len()));
        }
    }
    let mut out = String::new();
    out.push('#');
    let names: Vec<String> = (0..x.nrows()).map(|f| format!("f{f}")).collect();
    out.push_str(&names.join(","));
    if labels.is_some() {
        out.push_str(",y");
    }
    out.push('\n');
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        for (f, v) in col.iter().enumerate() {
            if f > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to String");
        }
        if let Some(l) = labels {
            write!(out, ",{}", l[j]).expect("writing to String");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parameters for [`make_synthetic_transfer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub clusters: usize,
    pub n_src_per_cluster: usize,
    pub n_trg_per_class: usize,
    pub n_test_per_class: usize,
    /// Number of clusters shared with the target task; also the number of
    /// target classes.
    pub relevant_clusters: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 10,
            clusters: 3,
            n_src_per_cluster: 20,
            n_trg_per_class: 15,
            n_test_per_class: 20,
            relevant_clusters: 2,
            noise_sd: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBundle {
    pub bundle: DatasetBundle,
    /// Whether each source sample comes from a cluster the target task uses.
    pub relevant: Vec<bool>,
    pub source_cluster: Vec<usize>,
    pub centers: Matrix,
}

/// Gaussian clusters in `[0,1]^d`. Target class `j` is drawn around center
/// `j`; source samples cover all clusters, in shuffled order.
pub fn make_synthetic_transfer(spec: &SyntheticSpec) -> Result<SyntheticBundle> {
    let SyntheticSpec {
        d,
        clusters,
        n_src_per_cluster,
        n_trg_per_class,
        n_test_per_class,
        relevant_clusters,
        noise_sd,
        seed,
    } = *spec;
    if d == 0 || clusters == 0 || n_src_per_cluster == 0 || n_trg_per_class == 0 {
        return Err(Error::InvalidInput(
            "synthetic counts must be positive".into(),
        ));
    }
    if relevant_clusters == 0 || relevant_clusters > clusters {
        return Err(Error::InvalidInput(format!(
            "relevant_clusters must be in 1..={clusters}, got {relevant_clusters}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise_sd must be >= 0, got {noise_sd}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = draw_centers(&mut rng, d, clusters);
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let sample = |rng: &mut ChaCha8Rng, c: usize| -> Array1<f64> {
        let mut x = centers.column(c).to_owned();
        if noise_sd > 0.0 {
            x.mapv_inplace(|v| v + noise.sample(rng));
        }
        x
    };

    let mut src_cluster: Vec<usize> = (0..clusters)
        .flat_map(|c| std::iter::repeat_n(c, n_src_per_cluster))
        .collect();
    // Fisher-Yates with the bundle's own stream keeps the order seed-determined.
    for i in (1..src_cluster.len()).rev() {
        let j = rng.random_range(0..=i);
        src_cluster.swap(i, j);
    }
    let x_src = columns(
        d,
        src_cluster.iter().map(|&c| sample(&mut rng, c)).collect(),
    );

    let y_trg: Vec<usize> = (0..relevant_clusters)
        .flat_map(|c| std::iter::repeat_n(c, n_trg_per_class))
        .collect();
    let x_trg = columns(d, y_trg.iter().map(|&c| sample(&mut rng, c)).collect());
    let y_test: Vec<usize> = (0..relevant_clusters)
        .flat_map(|c| std::iter::repeat_n(c, n_test_per_class))
        .collect();
    let x_test = columns(d, y_test.iter().map(|&c| sample(&mut rng, c)).collect());

    let relevant = src_cluster.iter().map(|&c| c < relevant_clusters).collect();
    Ok(SyntheticBundle {
        bundle: DatasetBundle::new(x_src, x_trg, y_trg, x_test, y_test)?,
        relevant,
        source_cluster: src_cluster,
        centers,
    })
}

fn draw_centers(rng: &mut ChaCha8Rng, d: usize, clusters: usize) -> Matrix {
    let min_sep = 0.25 * (d as f64).sqrt();
    let mut centers = Matrix::zeros((d, clusters));
    for c in 0..clusters {
        let mut candidate = Vector::zeros(d);
        for _attempt in 0..100 {
            candidate = Vector::from_shape_fn(d, |_| rng.random_range(0.1..0.9));
            let separated = (0..c).all(|prev| {
                let diff = &candidate - &centers.column(prev);
                diff.dot(&diff).sqrt() >= min_sep
            });
            if separated {
                break;
            }
        }
        centers.slice_mut(s![.., c]).assign(&candidate);
    }
    centers
}

fn columns(d: usize, cols: Vec<Array1<f64>>) -> Matrix {
    let mut m = Matrix::zeros((d, cols.len()));
    for (j, c) in cols.into_iter().enumerate() {
        m.column_mut(j).assign(&c);
    }
    m
}
