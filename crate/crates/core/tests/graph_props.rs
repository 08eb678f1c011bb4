mod common;

use common::{min_eigenvalue, rand_matrix, rng};
use gastl::graph::{build_knn_graph, cosine_similarity};
use gastl::numerics::trace_quadratic;
use ndarray::Axis;
use rand::Rng;

#[test]
fn random_graphs_are_valid_laplacians() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let n = r.random_range(2..=40);
        let d = r.random_range(1..=6);
        let k = r.random_range(1..n);
        let x = rand_matrix(&mut r, d, n, -1.0, 1.0);
        let g = build_knn_graph(&x.view(), k).unwrap();
        let s = &g.adjacency;
        for i in 0..n {
            assert_eq!(s[[i, i]], 0.0);
            for j in 0..n {
                assert_eq!(s[[i, j]], s[[j, i]]);
                assert!(s[[i, j]] >= 0.0);
            }
        }
        for row in g.laplacian.axis_iter(Axis(0)) {
            assert!(row.sum().abs() <= 1e-10);
        }
        assert!(min_eigenvalue(&g.laplacian) >= -1e-10, "seed {seed}");
    }
}

/// Under the OR rule every node keeps its own k nearest neighbours, so it has
/// at least k incident edges (fewer only where clamping zeroed a weight).
#[test]
fn incident_edge_counts() {
    for seed in 0..50 {
        let mut r = rng(500 + seed);
        let n = r.random_range(3..=30);
        let k = r.random_range(1..n);
        // Positive features keep every cosine similarity positive.
        let x = rand_matrix(&mut r, 4, n, 0.1, 1.0);
        let g = build_knn_graph(&x.view(), k).unwrap();
        for row in g.adjacency.axis_iter(Axis(0)) {
            let edges = row.iter().filter(|&&v| v > 0.0).count();
            assert!(
                edges >= k && edges < n,
                "seed {seed}: {edges} edges, k = {k}, n = {n}"
            );
        }
    }
}

#[test]
fn trace_identity_against_brute_force() {
    for seed in 0..20 {
        let mut r = rng(700 + seed);
        let n = r.random_range(2..=50);
        let k = r.random_range(1..n);
        let x = rand_matrix(&mut r, 5, n, -1.0, 1.0);
        let g = build_knn_graph(&x.view(), k).unwrap();
        let z = rand_matrix(&mut r, 3, n, 0.0, 1.0);
        let tr = trace_quadratic(&z.view(), &g.laplacian.view());
        let mut brute = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = &z.column(i) - &z.column(j);
                brute += 0.5 * diff.dot(&diff) * g.adjacency[[i, j]];
            }
        }
        assert!((tr - brute).abs() <= 1e-8 * brute.abs().max(1e-12));
    }
}

#[test]
fn cosine_edge_cases() {
    let a = ndarray::array![1.0, 0.0];
    let b = ndarray::array![0.0, 0.0];
    assert_eq!(cosine_similarity(&a.view(), &b.view()), 0.0);
    let c = ndarray::array![-2.0, 0.0];
    assert!((cosine_similarity(&a.view(), &c.view()) + 1.0).abs() < 1e-15);
}

#[test]
fn invalid_k() {
    let x = rand_matrix(&mut rng(1), 3, 5, 0.0, 1.0);
    assert!(build_knn_graph(&x.view(), 0).is_err());
    assert!(build_knn_graph(&x.view(), 5).is_err());
}
