//! Alternating optimization of the autoencoder parameters and the
//! row-sparse transform under the joint objective
//! `ℒ(Θ) + μ𝒞(Θ,A) + λ‖A‖_{2,1} + γ𝒢(Θ)`.

use std::path::Path;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    cross_loss, f1_value_and_gradient, forward, graph_loss, init_params, recon_loss,
    AutoencoderParams,
};
use crate::dataset::{DatasetBundle, ScalingParams};
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, SimilarityGraph};
use crate::l21solver::{irls_solve, irls_solve_from, IrlsOptions, TransformMatrix};
use crate::lbfgs::{minimize, LbfgsOptions};
use crate::numerics::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferHyperParams {
    pub hidden_size: usize,
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub knn: usize,
    pub max_outer: usize,
    /// Relative change of the joint objective that ends the alternation.
    pub outer_tol: f64,
    pub irls: IrlsOptions,
    pub lbfgs: LbfgsOptions,
    pub seed: u64,
}

impl Default for TransferHyperParams {
    fn default() -> Self {
        Self {
            hidden_size: 10,
            mu: 1.0,
            lambda: 1e-2,
            gamma: 1e-3,
            knn: 5,
            max_outer: 10,
            outer_tol: 1e-4,
            irls: IrlsOptions::default(),
            lbfgs: LbfgsOptions::default(),
            seed: 0,
        }
    }
}

impl TransferHyperParams {
    pub const HIDDEN_GRID: [usize; 4] = [10, 50, 100, 200];
    pub const LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    pub const GAMMA_GRID: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::InvalidInput("hidden size must be positive".into()));
        }
        if !(self.mu > 0.0) || !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need mu > 0, lambda >= 0, gamma >= 0 (mu={}, lambda={}, gamma={})",
                self.mu, self.lambda, self.gamma
            )));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::InvalidInput(
                "outer tolerance must be non-negative".into(),
            ));
        }
        self.lbfgs.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferModel {
    pub theta: AutoencoderParams,
    pub a: TransformMatrix,
    pub graph: SimilarityGraph,
    /// Joint objective after the initial transform step and after each
    /// outer round.
    pub objective_trace: Vec<f64>,
    pub hyper: TransferHyperParams,
    pub scaler: Option<ScalingParams>,
}

/// The joint objective, each term evaluated on its own.
pub fn full_objective(
    theta: &AutoencoderParams,
    a: &TransformMatrix,
    bundle: &DatasetBundle,
    graph: &SimilarityGraph,
    mu: f64,
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    let x = bundle.combined();
    let recon = recon_loss(theta, &x.view())?;
    let cross = cross_loss(theta, &a.view(), &bundle.x_src.view(), &bundle.x_trg.view())?;
    let graph_term = graph_loss(theta, &x.view(), &graph.laplacian.view())?;
    Ok(recon + mu * cross + lambda * a.l21() + gamma * graph_term)
}

/// Builds the kNN graph on `[X_src X_trg]` and runs [`fit_with_graph`].
pub fn fit(bundle: &DatasetBundle, hp: &TransferHyperParams) -> Result<TransferModel> {
    hp.validate()?;
    let graph = build_knn_graph(&bundle.combined().view(), hp.knn)?;
    fit_with_graph(bundle, hp, graph)
}

/// Transform step first (against the freshly initialized autoencoder), then
/// alternating autoencoder and transform steps until the joint objective
/// settles or `max_outer` rounds have run.
pub fn fit_with_graph(
    bundle: &DatasetBundle,
    hp: &TransferHyperParams,
    graph: SimilarityGraph,
) -> Result<TransferModel> {
    hp.validate()?;
    let n = bundle.n_src() + bundle.n_trg();
    if graph.n() != n {
        return Err(Error::dims("graph size", n, graph.n()));
    }
    let (d, m) = (bundle.dim(), hp.hidden_size);
    let x_src = bundle.x_src.view();
    let x_trg = bundle.x_trg.view();
    let laplacian = graph.laplacian.view();
    let objective = |theta: &AutoencoderParams, a: &TransformMatrix| {
        full_objective(theta, a, bundle, &graph, hp.mu, hp.lambda, hp.gamma)
    };
    let target_reconstruction = |theta: &AutoencoderParams| -> Result<_> {
        let fc = forward(theta, &x_trg)?;
        Ok(fc.output)
    };

    let mut theta = init_params(d, m, hp.seed)?;
    let h = target_reconstruction(&theta)?;
    let mut a = irls_solve(&x_src, &h.view(), hp.mu, hp.lambda, &hp.irls)
        .map_err(|e| at_round(0, e))?
        .a;
    let mut trace = vec![objective(&theta, &a)?];

    for round in 1..=hp.max_outer {
        let step = || -> Result<(AutoencoderParams, TransformMatrix)> {
            let a_view = a.view();
            let f1 = |flat: &Vector| {
                let params =
                    AutoencoderParams::from_flat(d, m, flat.as_slice().expect("contiguous"))
                        .expect("length fixed by the solver");
                match f1_value_and_gradient(
                    &params, &a_view, &x_src, &x_trg, &laplacian, hp.mu, hp.gamma,
                ) {
                    Ok(vg) => vg,
                    Err(_) => (f64::NAN, Vector::zeros(flat.len())),
                }
            };
            let res = minimize(f1, theta.to_flat(), &hp.lbfgs)?;
            let next_theta =
                AutoencoderParams::from_flat(d, m, res.minimizer.as_slice().expect("contiguous"))?;
            let h = target_reconstruction(&next_theta)?;
            let next_a =
                irls_solve_from(&x_src, &h.view(), hp.mu, hp.lambda, &hp.irls, a.clone())?.a;
            Ok((next_theta, next_a))
        };
        let (next_theta, next_a) = step().map_err(|e| at_round(round, e))?;
        theta = next_theta;
        a = next_a;
        let value = objective(&theta, &a)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(value);
        if (prev - value).abs() <= hp.outer_tol * prev.abs() {
            break;
        }
    }

    Ok(TransferModel {
        theta,
        a,
        graph,
        objective_trace: trace,
        hyper: *hp,
        scaler: None,
    })
}

fn at_round(iteration: usize, source: Error) -> Error {
    Error::OuterIteration {
        iteration,
        source: Box::new(source),
    }
}

/// JSON layout of a fitted model. Parameter arrays are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferModelDocument {
    pub dim: usize,
    pub hidden_size: usize,
    pub n_src: usize,
    pub n_trg: usize,
    /// `W1`, `W2`, `b1`, `b2` in that order.
    pub theta: Vec<f64>,
    pub transform: Vec<f64>,
    pub hyper: TransferHyperParams,
    pub objective_trace: Vec<f64>,
    pub scaler: Option<ScalingParams>,
}

impl TransferModel {
    pub fn to_document(&self) -> TransferModelDocument {
        TransferModelDocument {
            dim: self.theta.dim(),
            hidden_size: self.theta.hidden(),
            n_src: self.a.0.nrows(),
            n_trg: self.a.0.ncols(),
            theta: self.theta.to_flat().to_vec(),
            transform: self.a.0.iter().copied().collect(),
            hyper: self.hyper,
            objective_trace: self.objective_trace.clone(),
            scaler: self.scaler.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Hidden representations of the target training samples.
    pub fn target_hidden(&self, bundle: &DatasetBundle) -> Result<crate::numerics::Matrix> {
        Ok(forward(&self.theta, &bundle.x_trg.view())?.hidden)
    }

    /// Per-term breakdown of the joint objective at the fitted point.
    pub fn objective_terms(&self, bundle: &DatasetBundle) -> Result<[f64; 4]> {
        let x = bundle.combined();
        let fc = forward(&self.theta, &x.view())?;
        let n_src = bundle.n_src();
        let recon = recon_loss(&self.theta, &x.view())?;
        let h_trg = fc.output.slice(s![.., n_src..]);
        let resid = bundle.x_src.dot(&self.a.0) - h_trg;
        let cross = resid.iter().map(|v| v * v).sum::<f64>() / (2.0 * bundle.n_trg() as f64);
        let graph =
            crate::numerics::trace_quadratic(&fc.hidden.view(), &self.graph.laplacian.view());
        Ok([recon, cross, self.a.l21(), graph])
    }
}

impl TransferModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("model JSON: {e}")))
    }

    /// Rebuilds parameters and transform; the graph is not stored.
    pub fn parts(&self) -> Result<(AutoencoderParams, TransformMatrix)> {
        let theta = AutoencoderParams::from_flat(self.dim, self.hidden_size, &self.theta)?;
        let a = crate::numerics::Matrix::from_shape_vec(
            (self.n_src, self.n_trg),
            self.transform.clone(),
        )
        .map_err(|e| Error::InvalidInput(format!("transform shape: {e}")))?;
        Ok((theta, TransformMatrix(a)))
    }
}
