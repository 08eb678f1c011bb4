//! End-to-end experiments: scale, fit the transfer model, weight and
//! pseudo-label source samples, select the top `p`, train the weighted
//! softmax classifier and score it on the target test set. Also the grid
//! search and the graph-term ablation built on top of a single run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{one_hot, predict, train_softmax, ClassifierParams, WeightedTrainingSet};
use crate::dataset::{load_csv_matrix, make_synthetic_transfer, DatasetBundle, SyntheticSpec};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::relevance::{
    pseudo_labels, select_top_p, source_weights, transferability_scheme_a,
    transferability_scheme_b, LabelMode, PseudoLabelMatrix, RelevanceWeights, Scheme,
    TransferabilityMatrix,
};
use crate::transfer::{fit, TransferHyperParams, TransferModel};

/// How many source samples join the classifier's training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SampleCount {
    /// No transfer at all: the target-only baseline.
    None,
    Count(usize),
    /// Every source sample, ordered by weight.
    All,
}

impl SampleCount {
    fn resolve(self, n_src: usize) -> Option<usize> {
        match self {
            SampleCount::None => None,
            SampleCount::Count(p) => Some(p),
            SampleCount::All => Some(n_src),
        }
    }
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleCount::None => f.write_str("none"),
            SampleCount::All => f.write_str("all"),
            SampleCount::Count(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for SampleCount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SampleCount::None),
            "all" => Ok(SampleCount::All),
            other => other.parse::<usize>().map(SampleCount::Count).map_err(|_| {
                Error::InvalidInput(format!("p must be a count, 'all' or 'none', got {other:?}"))
            }),
        }
    }
}

impl TryFrom<String> for SampleCount {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SampleCount> for String {
    fn from(p: SampleCount) -> String {
        p.to_string()
    }
}

/// `{10, 20, …, 100, 150, …, 500, 1000, 1500}` below `n_src`, then all.
pub fn default_p_schedule(n_src: usize) -> Vec<SampleCount> {
    (1..=10)
        .map(|k| 10 * k)
        .chain((3..=10).map(|k| 50 * k))
        .chain([1000, 1500])
        .filter(|&p| p < n_src)
        .map(SampleCount::Count)
        .chain(std::iter::once(SampleCount::All))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataOrigin {
    Files {
        source: PathBuf,
        target_train: PathBuf,
        target_test: PathBuf,
        label_column: Option<String>,
    },
    Synthetic(SyntheticSpec),
}

impl DataOrigin {
    pub fn load(&self) -> Result<DatasetBundle> {
        match self {
            DataOrigin::Synthetic(spec) => Ok(make_synthetic_transfer(spec)?.bundle),
            DataOrigin::Files {
                source,
                target_train,
                target_test,
                label_column,
            } => {
                let label = Some(label_column.as_deref().unwrap_or("y"));
                let (x_src, _) = load_csv_matrix(source, None)?;
                let (x_trg, y_trg) = load_csv_matrix(target_train, label)?;
                let (x_test, y_test) = load_csv_matrix(target_test, label)?;
                DatasetBundle::new(
                    x_src,
                    x_trg,
                    y_trg.expect("label column requested"),
                    x_test,
                    y_test.expect("label column requested"),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataOrigin,
    pub hyper: TransferHyperParams,
    pub p: SampleCount,
    pub scheme: Scheme,
    pub mode: LabelMode,
    pub sigma2: f64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            data: DataOrigin::Synthetic(spec),
            hyper: TransferHyperParams::default(),
            p: SampleCount::All,
            scheme: Scheme::A,
            mode: LabelMode::Soft,
            sigma2: 1.0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub nonzero: usize,
}

impl WeightSummary {
    fn of(w: &RelevanceWeights) -> Self {
        let v = &w.0;
        Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.mean().unwrap_or(0.0),
            nonzero: v.iter().filter(|&&x| x != 0.0).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `None` for classes without test samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub selected_sources: Vec<usize>,
    pub weight_summary: Option<WeightSummary>,
    pub objective_trace: Vec<f64>,
    /// Set when every source weight was zero and the run fell back to the
    /// target-only classifier.
    pub target_only_fallback: bool,
    pub config: ExperimentConfig,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Intermediate products of a run that used the transfer model.
#[derive(Debug, Clone)]
pub struct TransferArtifacts {
    pub model: TransferModel,
    pub weights: RelevanceWeights,
    pub transferability: TransferabilityMatrix,
    pub pseudo_labels: PseudoLabelMatrix,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub classifier: ClassifierParams,
    pub transfer: Option<TransferArtifacts>,
}

/// Loads the configured data and runs [`run_on_bundle`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let bundle = cfg.data.load()?;
    Ok(run_on_bundle(&bundle, cfg)?.report)
}

/// Selected source samples (pseudo-labels, relevance weights) followed by
/// all target training samples (one-hot, weight 1).
pub fn assemble_training_set(
    bundle: &DatasetBundle,
    selected: &[usize],
    weights: &RelevanceWeights,
    labels: &PseudoLabelMatrix,
) -> Result<WeightedTrainingSet> {
    let n_sel = selected.len();
    let n = n_sel + bundle.n_trg();
    let c = bundle.n_classes;
    let mut x = Matrix::zeros((bundle.dim(), n));
    let mut l = Matrix::zeros((n, c));
    let mut w = Vector::ones(n);
    for (k, &i) in selected.iter().enumerate() {
        x.column_mut(k).assign(&bundle.x_src.column(i));
        l.row_mut(k).assign(&labels.labels.row(i));
        w[k] = weights.0[i];
    }
    x.slice_mut(ndarray::s![.., n_sel..]).assign(&bundle.x_trg);
    l.slice_mut(ndarray::s![n_sel.., ..])
        .assign(&one_hot(&bundle.y_trg, c)?);
    WeightedTrainingSet::new(x, l, w)
}

/// Runs the whole pipeline on an unscaled bundle.
pub fn run_on_bundle(raw: &DatasetBundle, cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let started = Instant::now();
    let (bundle, scaler) = raw.scaled()?;
    let transfer = match cfg.p {
        SampleCount::None => None,
        p => {
            check_p(p, bundle.n_src())?;
            Some(transfer_stage(&bundle, scaler, cfg)?)
        }
    };
    let (report, classifier) = classify_stage(&bundle, cfg, transfer.as_ref(), started)?;
    Ok(ExperimentRun {
        report,
        classifier,
        transfer,
    })
}

/// One report per entry of `ps`, all sharing a single transfer fit, which is
/// returned alongside.
pub fn run_p_sweep(
    raw: &DatasetBundle,
    cfg: &ExperimentConfig,
    ps: &[SampleCount],
) -> Result<(Vec<ExperimentReport>, Option<TransferArtifacts>)> {
    cfg.validate()?;
    let started = Instant::now();
    let (bundle, scaler) = raw.scaled()?;
    for &p in ps {
        check_p(p, bundle.n_src())?;
    }
    let transfer = if ps.iter().any(|&p| p != SampleCount::None) {
        Some(transfer_stage(&bundle, scaler, cfg)?)
    } else {
        None
    };
    let reports = ps
        .iter()
        .map(|&p| {
            let cell = ExperimentConfig { p, ..cfg.clone() };
            let t = transfer.as_ref().filter(|_| p != SampleCount::None);
            Ok(classify_stage(&bundle, &cell, t, started)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((reports, transfer))
}

fn check_p(p: SampleCount, n_src: usize) -> Result<()> {
    match p.resolve(n_src) {
        Some(k) if k > n_src => Err(Error::InvalidInput(format!(
            "p = {k} exceeds the {n_src} source samples"
        ))),
        _ => Ok(()),
    }
}

fn transfer_stage(
    bundle: &DatasetBundle,
    scaler: crate::dataset::ScalingParams,
    cfg: &ExperimentConfig,
) -> Result<TransferArtifacts> {
    let mut model = fit(bundle, &cfg.hyper)?;
    model.scaler = Some(scaler);
    let weights = source_weights(&model.a);
    let tr = match cfg.scheme {
        Scheme::A => transferability_scheme_a(&model.a, &bundle.y_trg, bundle.n_classes)?,
        Scheme::B => transferability_scheme_b(
            &model.theta,
            &bundle.x_src.view(),
            &bundle.x_trg.view(),
            &bundle.y_trg,
            bundle.n_classes,
            cfg.sigma2,
        )?,
    };
    let labels = pseudo_labels(&tr, cfg.mode);
    Ok(TransferArtifacts {
        model,
        weights,
        transferability: tr,
        pseudo_labels: labels,
    })
}

/// Builds the training set for `cfg.p` (target only when `transfer` is
/// absent), trains, and scores on the test split.
fn classify_stage(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    transfer: Option<&TransferArtifacts>,
    started: Instant,
) -> Result<(ExperimentReport, ClassifierParams)> {
    let mut selected = Vec::new();
    let mut fallback = false;
    let target_only =
        || WeightedTrainingSet::target_only(&bundle.x_trg, &bundle.y_trg, bundle.n_classes);
    let ts = match (transfer, cfg.p.resolve(bundle.n_src())) {
        (Some(t), Some(p)) => {
            if t.weights.all_zero() && p > 0 {
                fallback = true;
                target_only()?
            } else {
                selected = select_top_p(&t.weights, p)?;
                assemble_training_set(bundle, &selected, &t.weights, &t.pseudo_labels)?
            }
        }
        _ => target_only()?,
    };

    let classifier = train_softmax(&ts, &cfg.hyper.lbfgs)?;
    let pred = predict(&classifier, &bundle.x_test.view())?;
    let (correct, per_class_accuracy) = score(&pred.labels, &bundle.y_test, bundle.n_classes);
    let total = bundle.y_test.len();
    let report = ExperimentReport {
        accuracy: if total > 0 {
            correct as f64 / total as f64
        } else {
            0.0
        },
        correct,
        total,
        per_class_accuracy,
        selected_sources: selected,
        weight_summary: transfer.map(|t| WeightSummary::of(&t.weights)),
        objective_trace: transfer
            .map(|t| t.model.objective_trace.clone())
            .unwrap_or_default(),
        target_only_fallback: fallback,
        config: cfg.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, classifier))
}

fn score(pred: &[usize], truth: &[usize], n_classes: usize) -> (usize, Vec<Option<f64>>) {
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let per_class = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    (hits.iter().sum(), per_class)
}

/// Value lists swept by [`grid_search`]; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub hidden_sizes: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub ps: Vec<SampleCount>,
}

impl GridSpec {
    /// Grid holding only the values already in `cfg`.
    pub fn singleton(cfg: &ExperimentConfig) -> Self {
        Self {
            hidden_sizes: vec![cfg.hyper.hidden_size],
            lambdas: vec![cfg.hyper.lambda],
            gammas: vec![cfg.hyper.gamma],
            ps: vec![cfg.p],
        }
    }

    pub fn cells(&self) -> usize {
        self.hidden_sizes.len() * self.lambdas.len() * self.gammas.len() * self.ps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub hidden_size: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub p: SampleCount,
    pub scheme: Scheme,
    pub mode: LabelMode,
    pub accuracy: Option<f64>,
    pub seconds: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: ExperimentReport,
    pub best_index: usize,
    pub rows: Vec<GridRow>,
    pub reports: Vec<Option<ExperimentReport>>,
}

/// Marker recorded with grid results: cells are ranked on the same test
/// accuracy they report.
pub const MODEL_SELECTION_NOTE: &str =
    "best cell chosen by test accuracy; not a held-out generalization estimate";

#[derive(Serialize)]
struct GridDocument<'a> {
    model_selection: &'a str,
    best_index: usize,
    best: &'a ExperimentReport,
    rows: &'a [GridRow],
}

impl GridOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GridDocument {
            model_selection: MODEL_SELECTION_NOTE,
            best_index: self.best_index,
            best: &self.best,
            rows: &self.rows,
        })
        .expect("grid serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,lambda,gamma,p,scheme,mode,accuracy,seconds,status\n");
        for r in &self.rows {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let status = r.status.replace([',', '\n'], ";");
            out.push_str(&format!(
                "{},{},{},{},{:?},{},{},{},{}\n",
                r.hidden_size,
                r.lambda,
                r.gamma,
                r.p,
                r.scheme,
                String::from(match r.mode {
                    LabelMode::Soft => "soft",
                    LabelMode::Hard => "hard",
                }),
                acc,
                r.seconds,
                status
            ));
        }
        out
    }
}

fn cell_key(hp: &TransferHyperParams, p: SampleCount) -> (usize, f64, f64, SampleCount) {
    (hp.hidden_size, hp.lambda, hp.gamma, p)
}

fn key_cmp(
    a: &(usize, f64, f64, SampleCount),
    b: &(usize, f64, f64, SampleCount),
) -> std::cmp::Ordering {
    a.0.cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

/// Runs every cell of the grid (concurrently) on the data of `base`. Cell
/// `k` uses seed `base.hyper.seed + k`. Failed cells are recorded, not
/// fatal; it is an error only if every cell fails.
pub fn grid_search(base: &ExperimentConfig, grid: &GridSpec) -> Result<GridOutcome> {
    base.validate()?;
    let bundle = base.data.load()?;
    grid_search_on_bundle(&bundle, base, grid)
}

pub fn grid_search_on_bundle(
    bundle: &DatasetBundle,
    base: &ExperimentConfig,
    grid: &GridSpec,
) -> Result<GridOutcome> {
    if grid.cells() == 0 {
        return Err(Error::InvalidInput("grid has an empty value list".into()));
    }
    let mut cells = Vec::with_capacity(grid.cells());
    for &m in &grid.hidden_sizes {
        for &lambda in &grid.lambdas {
            for &gamma in &grid.gammas {
                for &p in &grid.ps {
                    let mut cfg = base.clone();
                    cfg.hyper.hidden_size = m;
                    cfg.hyper.lambda = lambda;
                    cfg.hyper.gamma = gamma;
                    cfg.hyper.seed = base.hyper.seed.wrapping_add(cells.len() as u64);
                    cfg.p = p;
                    cells.push(cfg);
                }
            }
        }
    }

    let results: Vec<(Result<ExperimentReport>, f64)> = cells
        .par_iter()
        .map(|cfg| {
            let t = Instant::now();
            let r = run_on_bundle(bundle, cfg).map(|run| run.report);
            (r, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut reports = Vec::with_capacity(cells.len());
    let mut best: Option<usize> = None;
    let mut first_error = None;
    for (k, (cfg, (res, seconds))) in cells.iter().zip(results).enumerate() {
        let (accuracy, status, report) = match res {
            Ok(r) => (Some(r.accuracy), "ok".to_string(), Some(r)),
            Err(e) => {
                let msg = format!("error: {e}");
                first_error.get_or_insert(e);
                (None, msg, None)
            }
        };
        rows.push(GridRow {
            hidden_size: cfg.hyper.hidden_size,
            lambda: cfg.hyper.lambda,
            gamma: cfg.hyper.gamma,
            p: cfg.p,
            scheme: cfg.scheme,
            mode: cfg.mode,
            accuracy,
            seconds,
            status,
        });
        if let Some(acc) = accuracy {
            let better = match best {
                None => true,
                Some(b) => {
                    let best_acc = rows[b].accuracy.expect("best cell succeeded");
                    acc > best_acc
                        || (acc == best_acc
                            && key_cmp(
                                &cell_key(&cfg.hyper, cfg.p),
                                &cell_key(&cells[b].hyper, cells[b].p),
                            )
                            .is_lt())
                }
            };
            if better {
                best = Some(k);
            }
        }
        reports.push(report);
    }
    let Some(best_index) = best else {
        return Err(first_error.expect("no cell succeeded, so one failed"));
    };
    Ok(GridOutcome {
        best: reports[best_index].clone().expect("best cell has a report"),
        best_index,
        rows,
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct GammaAblation {
    /// Best cell restricted to `γ = 0`.
    pub without_graph: ExperimentReport,
    /// Best cell over all `γ`.
    pub best: ExperimentReport,
    pub best_gamma: f64,
    /// `best.accuracy − without_graph.accuracy`.
    pub delta: f64,
    pub grid: GridOutcome,
}

#[derive(Serialize)]
struct GammaAblationDocument<'a> {
    model_selection: &'a str,
    zero_gamma: f64,
    best_gamma: f64,
    delta: f64,
    without_graph: &'a ExperimentReport,
    best: &'a ExperimentReport,
}

impl GammaAblation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GammaAblationDocument {
            model_selection: MODEL_SELECTION_NOTE,
            zero_gamma: 0.0,
            best_gamma: self.best_gamma,
            delta: self.delta,
            without_graph: &self.without_graph,
            best: &self.best,
        })
        .expect("ablation serializes")
    }
}

/// Compares the best `γ = 0` cell against the best cell overall.
pub fn gamma_ablation(base: &ExperimentConfig, grid: &GridSpec) -> Result<GammaAblation> {
    base.validate()?;
    let bundle = base.data.load()?;
    gamma_ablation_on_bundle(&bundle, base, grid)
}

pub fn gamma_ablation_on_bundle(
    bundle: &DatasetBundle,
    base: &ExperimentConfig,
    grid: &GridSpec,
) -> Result<GammaAblation> {
    if !grid.gammas.contains(&0.0) {
        return Err(Error::InvalidInput(
            "gamma ablation needs 0 in the gamma list".into(),
        ));
    }
    let outcome = grid_search_on_bundle(bundle, base, grid)?;
    let mut zero_best: Option<usize> = None;
    for (k, row) in outcome.rows.iter().enumerate() {
        if row.gamma != 0.0 {
            continue;
        }
        let Some(acc) = row.accuracy else { continue };
        let better = match zero_best {
            None => true,
            Some(b) => {
                let b_row = &outcome.rows[b];
                let b_acc = b_row.accuracy.expect("succeeded");
                acc > b_acc
                    || (acc == b_acc
                        && key_cmp(
                            &(row.hidden_size, row.lambda, row.gamma, row.p),
                            &(b_row.hidden_size, b_row.lambda, b_row.gamma, b_row.p),
                        )
                        .is_lt())
            }
        };
        if better {
            zero_best = Some(k);
        }
    }
    let zero_index =
        zero_best.ok_or_else(|| Error::Numerical("every gamma = 0 cell failed".into()))?;
    let without_graph = outcome.reports[zero_index].clone().expect("succeeded");
    let best = outcome.best.clone();
    Ok(GammaAblation {
        delta: best.accuracy - without_graph.accuracy,
        best_gamma: best.config.hyper.gamma,
        without_graph,
        best,
        grid: outcome,
    })
}

/// Mean of `values` over entries where `mask` is true.
pub fn masked_mean(values: &Vector, mask: &[bool]) -> Option<f64> {
    let picked: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Counts rows of a matrix whose Euclidean norm exceeds `threshold`.
pub fn rows_above(m: &Matrix, threshold: f64) -> usize {
    m.axis_iter(Axis(0))
        .filter(|r| r.dot(r).sqrt() > threshold)
        .count()
}
