//! k-nearest-neighbour cosine similarity graph and its Laplacian.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    /// Symmetric adjacency with zero diagonal and entries in `[0, 1]`.
    pub adjacency: Matrix,
    pub degree: Vector,
    /// `diag(degree) - adjacency`.
    pub laplacian: Matrix,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Builds degree and Laplacian from a symmetric adjacency matrix.
    pub fn from_adjacency(adjacency: Matrix) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::dims(
                "adjacency",
                format!("{n}x{n}"),
                format!("{n}x{}", adjacency.ncols()),
            ));
        }
        let degree = adjacency.sum_axis(Axis(1));
        let mut laplacian = -&adjacency;
        for i in 0..n {
            laplacian[[i, i]] += degree[i];
        }
        Ok(Self {
            adjacency,
            degree,
            laplacian,
        })
    }
}

/// `xᵀy / (‖x‖‖y‖)`, or 0 when either vector is zero.
pub fn cosine_similarity(x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64 {
    let nx = x.dot(x).sqrt();
    let ny = y.dot(y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    (x.dot(y) / (nx * ny)).clamp(-1.0, 1.0)
}

/// Indices of the `k` most similar other columns of each column, ties going
/// to the lower index.
fn neighbour_sets(sim: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = sim.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| sim[[i, b]].total_cmp(&sim[[i, a]]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

/// Symmetric kNN graph over the columns of `x`: an edge joins `i` and `j`
/// when either is among the other's `k` nearest neighbours by cosine
/// similarity. Edge weights are the similarity clamped at zero.
pub fn build_knn_graph(x: &ArrayView2<f64>, k: usize) -> Result<SimilarityGraph> {
    let n = x.ncols();
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!(
            "knn graph needs 1 <= k < n (k={k}, n={n})"
        )));
    }
    let norms: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect();
    let gram = x.t().dot(x);
    let sim = Matrix::from_shape_fn((n, n), |(i, j)| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            (gram[[i, j]] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });

    let mut adjacency = Matrix::zeros((n, n));
    for (i, nbrs) in neighbour_sets(&sim, k).into_iter().enumerate() {
        for j in nbrs {
            // symmetric by construction; gram rounding may differ across the
            // diagonal, so take one orientation for both entries
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let w = sim[[a, b]].max(0.0);
            adjacency[[a, b]] = w;
            adjacency[[b, a]] = w;
        }
    }
    SimilarityGraph::from_adjacency(adjacency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_examples() {
        let v = array![1.0, 2.0, 3.0];
        assert!((cosine_similarity(&v.view(), &v.view()) - 1.0).abs() < 1e-15);
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(cosine_similarity(&e1.view(), &e2.view()), 0.0);
        assert_eq!(cosine_similarity(&e1.view(), &array![0.0, 0.0].view()), 0.0);
    }

    #[test]
    fn three_point_graph() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let x = array![[1.0, r, 0.0], [0.0, r, 1.0]];
        let g = build_knn_graph(&x.view(), 1).unwrap();
        let s = &g.adjacency;
        assert!((s[[0, 1]] - r).abs() < 1e-12);
        assert!((s[[1, 0]] - r).abs() < 1e-12);
        assert!((s[[1, 2]] - r).abs() < 1e-12);
        assert!((s[[2, 1]] - r).abs() < 1e-12);
        assert_eq!(s[[0, 2]], 0.0);
        assert_eq!(s[[2, 0]], 0.0);
    }

    #[test]
    fn identical_pair() {
        let x = array![[1.0, 1.0], [2.0, 2.0]];
        let g = build_knn_graph(&x.view(), 1).unwrap();
        let close =
            |a: &Matrix, b: Matrix| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&g.adjacency, array![[0.0, 1.0], [1.0, 0.0]]));
        assert!(close(&g.laplacian, array![[1.0, -1.0], [-1.0, 1.0]]));
    }

    #[test]
    fn negative_similarity_clamped() {
        let x = array![[1.0, -1.0], [0.0, 0.0]];
        let g = build_knn_graph(&x.view(), 1).unwrap();
        assert_eq!(g.adjacency, Matrix::zeros((2, 2)));
    }

    #[test]
    fn bad_k_rejected() {
        let x = Matrix::ones((2, 3));
        assert!(build_knn_graph(&x.view(), 3).is_err());
        assert!(build_knn_graph(&x.view(), 0).is_err());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let x = Matrix::from_shape_fn((3, 12), |(i, j)| ((i * 7 + j * 13) % 11) as f64 / 11.0);
        let g = build_knn_graph(&x.view(), 3).unwrap();
        for row in g.laplacian.axis_iter(Axis(0)) {
            assert!(row.sum().abs() < 1e-10);
        }
        for i in 0..g.n() {
            assert_eq!(g.adjacency[[i, i]], 0.0);
        }
    }
}
