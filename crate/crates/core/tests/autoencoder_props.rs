mod common;

use common::{central_diff, rand_matrix, rel_inf, rng};
use gastl::autoencoder::{
    cross_loss, f1_value_and_gradient, graph_loss, init_params, recon_loss, AutoencoderParams,
};
use gastl::graph::build_knn_graph;
use gastl::numerics::{Matrix, Vector};
use ndarray::Axis;
use rand::Rng;

struct Instance {
    theta: AutoencoderParams,
    a: Matrix,
    x_src: Matrix,
    x_trg: Matrix,
    lap: Matrix,
}

fn instance(seed: u64, d: usize, m: usize, n_src: usize, n_trg: usize) -> Instance {
    let mut r = rng(seed);
    let x_src = rand_matrix(&mut r, d, n_src, 0.0, 1.0);
    let x_trg = rand_matrix(&mut r, d, n_trg, 0.0, 1.0);
    let a = rand_matrix(&mut r, n_src, n_trg, -0.5, 0.5);
    let x = ndarray::concatenate(Axis(1), &[x_src.view(), x_trg.view()]).unwrap();
    let lap = build_knn_graph(&x.view(), 3).unwrap().laplacian;
    let mut theta = init_params(d, m, seed).unwrap();
    theta.b1 = Vector::from_shape_fn(m, |_| r.random_range(-0.3..0.3));
    theta.b2 = Vector::from_shape_fn(d, |_| r.random_range(-0.3..0.3));
    Instance {
        theta,
        a,
        x_src,
        x_trg,
        lap,
    }
}

fn value_and_grad(
    inst: &Instance,
    theta: &AutoencoderParams,
    mu: f64,
    gamma: f64,
) -> (f64, Vector) {
    f1_value_and_gradient(
        theta,
        &inst.a.view(),
        &inst.x_src.view(),
        &inst.x_trg.view(),
        &inst.lap.view(),
        mu,
        gamma,
    )
    .unwrap()
}

#[test]
fn gradient_matches_finite_differences_over_weight_grid() {
    for seed in 0..5 {
        let inst = instance(seed, 6, 4, 8, 5);
        let flat = inst.theta.to_flat();
        for &mu in &[0.0, 0.1, 1.0] {
            for &gamma in &[0.0, 0.01] {
                let (_, g) = value_and_grad(&inst, &inst.theta, mu, gamma);
                let num = central_diff(
                    |v| {
                        let p = AutoencoderParams::from_flat(6, 4, v.as_slice().unwrap()).unwrap();
                        value_and_grad(&inst, &p, mu, gamma).0
                    },
                    &flat,
                    1e-6,
                );
                let err = rel_inf(&g, &num);
                assert!(err <= 1e-5, "seed {seed} mu {mu} gamma {gamma}: {err:e}");
            }
        }
    }
}

#[test]
fn value_is_sum_of_terms() {
    let inst = instance(11, 5, 3, 7, 4);
    let (mu, gamma) = (0.7, 0.05);
    let (v, _) = value_and_grad(&inst, &inst.theta, mu, gamma);
    let x = ndarray::concatenate(Axis(1), &[inst.x_src.view(), inst.x_trg.view()]).unwrap();
    let expected = recon_loss(&inst.theta, &x.view()).unwrap()
        + mu * cross_loss(
            &inst.theta,
            &inst.a.view(),
            &inst.x_src.view(),
            &inst.x_trg.view(),
        )
        .unwrap()
        + gamma * graph_loss(&inst.theta, &x.view(), &inst.lap.view()).unwrap();
    assert!((v - expected).abs() <= 1e-13 * expected.abs());
}

#[test]
fn loss_terms_are_non_negative() {
    for seed in 0..10 {
        let inst = instance(seed, 5, 3, 6, 4);
        let x = ndarray::concatenate(Axis(1), &[inst.x_src.view(), inst.x_trg.view()]).unwrap();
        assert!(recon_loss(&inst.theta, &x.view()).unwrap() >= 0.0);
        assert!(
            cross_loss(
                &inst.theta,
                &inst.a.view(),
                &inst.x_src.view(),
                &inst.x_trg.view()
            )
            .unwrap()
                >= 0.0
        );
        assert!(graph_loss(&inst.theta, &x.view(), &inst.lap.view()).unwrap() >= -1e-12);
    }
}

/// Permutes source columns of X_src (and rows of A), target columns of
/// X_trg (and columns of A), and the Laplacian consistently.
#[test]
fn value_is_permutation_invariant() {
    let inst = instance(21, 5, 3, 6, 4);
    let (n_src, n_trg) = (6, 4);
    let src_perm = [3, 0, 5, 1, 4, 2];
    let trg_perm = [2, 3, 1, 0];
    let full: Vec<usize> = src_perm
        .iter()
        .copied()
        .chain(trg_perm.iter().map(|&t| n_src + t))
        .collect();
    let x_src = inst.x_src.select(Axis(1), &src_perm);
    let x_trg = inst.x_trg.select(Axis(1), &trg_perm);
    let a = inst.a.select(Axis(0), &src_perm).select(Axis(1), &trg_perm);
    let lap = inst.lap.select(Axis(0), &full).select(Axis(1), &full);
    assert_eq!(lap.dim(), (n_src + n_trg, n_src + n_trg));
    let permuted = Instance {
        theta: inst.theta.clone(),
        a,
        x_src,
        x_trg,
        lap,
    };
    let (v0, g0) = value_and_grad(&inst, &inst.theta, 1.0, 0.01);
    let (v1, g1) = value_and_grad(&permuted, &inst.theta, 1.0, 0.01);
    assert!((v0 - v1).abs() <= 1e-12 * v0.abs());
    assert!(rel_inf(&g1, &g0) <= 1e-10);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let inst = instance(3, 5, 3, 6, 4);
    let bad_a = Matrix::zeros((5, 4));
    assert!(f1_value_and_gradient(
        &inst.theta,
        &bad_a.view(),
        &inst.x_src.view(),
        &inst.x_trg.view(),
        &inst.lap.view(),
        1.0,
        0.0
    )
    .is_err());
    let bad_lap = Matrix::zeros((3, 3));
    assert!(f1_value_and_gradient(
        &inst.theta,
        &inst.a.view(),
        &inst.x_src.view(),
        &inst.x_trg.view(),
        &bad_lap.view(),
        1.0,
        0.0
    )
    .is_err());
}
