//! Multinomial logistic (softmax) classifier trained on per-sample weighted,
//! possibly soft, labels.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::{minimize, LbfgsOptions};
use crate::numerics::{Matrix, Vector};

/// Samples as columns of `x`, one label row per sample, one weight per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrainingSet {
    pub x: Matrix,
    pub labels: Matrix,
    pub weights: Vector,
}

impl WeightedTrainingSet {
    pub fn new(x: Matrix, labels: Matrix, weights: Vector) -> Result<Self> {
        let n = x.ncols();
        if labels.nrows() != n {
            return Err(Error::dims("label rows", n, labels.nrows()));
        }
        if weights.len() != n {
            return Err(Error::dims("sample weights", n, weights.len()));
        }
        if labels.ncols() == 0 {
            return Err(Error::InvalidInput("label matrix has no classes".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidInput(format!(
                "sample weight {w} outside [0, 1]"
            )));
        }
        for (i, row) in labels.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "label row {i} is not a probability distribution"
                )));
            }
        }
        Ok(Self { x, labels, weights })
    }

    /// Target samples only: one-hot labels, weight 1.
    pub fn target_only(x_trg: &Matrix, y_trg: &[usize], n_classes: usize) -> Result<Self> {
        Self::new(
            x_trg.clone(),
            one_hot(y_trg, n_classes)?,
            Vector::ones(x_trg.ncols()),
        )
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.labels.ncols()
    }
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros((labels.len(), n_classes));
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        m[[i, y]] = 1.0;
    }
    Ok(m)
}

/// One parameter column per class, `d × n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub theta: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierDocument {
    dim: usize,
    n_classes: usize,
    /// Row-major `d × n_classes`.
    theta: Vec<f64>,
}

impl ClassifierParams {
    pub fn to_json(&self) -> String {
        let doc = ClassifierDocument {
            dim: self.theta.nrows(),
            n_classes: self.theta.ncols(),
            theta: self.theta.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("classifier document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClassifierDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("classifier JSON: {e}")))?;
        let theta = Matrix::from_shape_vec((doc.dim, doc.n_classes), doc.theta)
            .map_err(|e| Error::InvalidInput(format!("classifier shape: {e}")))?;
        Ok(Self { theta })
    }
}

/// Row `i` is the log-softmax of sample `i`'s logits.
fn log_softmax(theta: &ArrayView2<f64>, x: &ArrayView2<f64>) -> Matrix {
    let mut logits = x.t().dot(theta);
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    logits
}

/// Weighted cross-entropy averaged over all `n` samples, and its gradient.
pub fn softmax_cost_grad(
    theta: &ArrayView2<f64>,
    ts: &WeightedTrainingSet,
) -> Result<(f64, Matrix)> {
    if theta.dim() != (ts.x.nrows(), ts.n_classes()) {
        return Err(Error::dims(
            "classifier parameters",
            format!("{}x{}", ts.x.nrows(), ts.n_classes()),
            format!("{}x{}", theta.nrows(), theta.ncols()),
        ));
    }
    let n = ts.len() as f64;
    let logp = log_softmax(theta, &ts.x.view());
    let mut cost = 0.0;
    // residual row i: w_i (L_i − (Σ_j L_ij) p_i)
    let mut resid = Matrix::zeros(logp.dim());
    for (i, ((lp, lab), mut r)) in logp
        .axis_iter(Axis(0))
        .zip(ts.labels.axis_iter(Axis(0)))
        .zip(resid.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let w = ts.weights[i];
        if w == 0.0 {
            continue;
        }
        let mass = lab.sum();
        for j in 0..lp.len() {
            if lab[j] != 0.0 {
                cost -= w * lab[j] * lp[j];
            }
            r[j] = w * (lab[j] - mass * lp[j].exp());
        }
    }
    let grad = ts.x.dot(&resid) * (-1.0 / n);
    Ok((cost / n, grad))
}

/// L-BFGS from zero parameters.
pub fn train_softmax(ts: &WeightedTrainingSet, opts: &LbfgsOptions) -> Result<ClassifierParams> {
    if ts.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if ts.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidInput("every training weight is zero".into()));
    }
    let (d, c) = (ts.x.nrows(), ts.n_classes());
    let objective = |flat: &Vector| {
        let theta = flat
            .view()
            .into_shape_with_order((d, c))
            .expect("parameter length fixed");
        let (j, g) = softmax_cost_grad(&theta, ts).expect("shapes fixed");
        (j, Vector::from_iter(g.iter().copied()))
    };
    let res = minimize(objective, Vector::zeros(d * c), opts)?;
    let theta = res
        .minimizer
        .into_shape_with_order((d, c))
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ClassifierParams { theta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// `n × n_classes`, rows summing to one.
    pub probabilities: Matrix,
}

/// Softmax probabilities and argmax labels, ties to the lower class.
pub fn predict(params: &ClassifierParams, x: &ArrayView2<f64>) -> Result<Prediction> {
    if x.nrows() != params.theta.nrows() {
        return Err(Error::dims(
            "prediction features",
            params.theta.nrows(),
            x.nrows(),
        ));
    }
    let probabilities = log_softmax(&params.theta.view(), x).mapv(f64::exp);
    let labels = probabilities
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| {
                    if v > bv {
                        (j, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect();
    Ok(Prediction {
        labels,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_set() -> WeightedTrainingSet {
        let x = array![[0.1, 0.9, 0.2, 0.8], [0.9, 0.1, 0.7, 0.3]];
        WeightedTrainingSet::target_only(&x, &[0, 1, 0, 1], 2).unwrap()
    }

    #[test]
    fn uniform_cost_at_zero() {
        let ts = toy_set();
        let (j, _) = softmax_cost_grad(&Matrix::zeros((2, 2)).view(), &ts).unwrap();
        assert!((j - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_cost_and_gradient() {
        let mut ts = toy_set();
        ts.weights.fill(0.0);
        let theta = array![[0.3, -1.0], [2.0, 0.5]];
        let (j, g) = softmax_cost_grad(&theta.view(), &ts).unwrap();
        assert_eq!(j, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(train_softmax(&ts, &LbfgsOptions::default()).is_err());
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let ts = toy_set();
        let params = train_softmax(&ts, &LbfgsOptions::default()).unwrap();
        let pred = predict(&params, &ts.x.view()).unwrap();
        assert_eq!(pred.labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn predict_examples() {
        let zero = ClassifierParams {
            theta: Matrix::zeros((2, 3)),
        };
        let x = array![[1.0, 0.2], [0.5, 0.7]];
        let p = predict(&zero, &x.view()).unwrap();
        assert_eq!(p.labels, vec![0, 0]);
        assert!(p
            .probabilities
            .iter()
            .all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut theta = Matrix::zeros((2, 3));
        theta[[0, 2]] = 1e3;
        let p = predict(&ClassifierParams { theta }, &x.view()).unwrap();
        assert_eq!(p.labels, vec![2, 2]);
        for row in p.probabilities.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(predict(&zero, &Matrix::zeros((3, 1)).view()).is_err());
    }

    #[test]
    fn training_set_validation() {
        let x = Matrix::zeros((2, 2));
        assert!(WeightedTrainingSet::new(
            x.clone(),
            array![[0.5, 0.4], [1.0, 0.0]],
            Vector::ones(2)
        )
        .is_err());
        assert!(WeightedTrainingSet::new(
            x.clone(),
            array![[1.0, 0.0], [1.0, 0.0]],
            array![1.0, 1.5]
        )
        .is_err());
        assert!(WeightedTrainingSet::new(x.clone(), array![[1.0, 0.0]], Vector::ones(2)).is_err());
        assert!(WeightedTrainingSet::target_only(&x, &[0, 3], 2).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = ClassifierParams {
            theta: array![[0.1, -2.5], [1.0 / 3.0, 4.0]],
        };
        assert_eq!(ClassifierParams::from_json(&p.to_json()).unwrap(), p);
    }
}
