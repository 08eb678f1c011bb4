mod common;

use common::rng;
use gastl::lbfgs::{minimize, two_loop_direction, CurvaturePair, LbfgsOptions, Termination};
use gastl::numerics::{Matrix, Vector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// `½ (x − c)ᵀ H (x − c)` with eigenvalues spread over `[1, cond]`.
fn quadratic(seed: u64, n: usize, cond: f64) -> (Matrix, Vector) {
    let mut r = rng(seed);
    let q = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0))
        .qr()
        .q();
    let eig: Vec<f64> = (0..n)
        .map(|_| cond.powf(r.random_range(0.0..1.0)))
        .collect();
    let h = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    let hm = Matrix::from_shape_fn((n, n), |(i, j)| 0.5 * (h[(i, j)] + h[(j, i)]));
    let c = Vector::from_shape_fn(n, |_| r.random_range(-2.0..2.0));
    (hm, c)
}

fn tight() -> LbfgsOptions {
    LbfgsOptions {
        gradient_tolerance: 1e-9,
        relative_value_tolerance: 0.0,
        ..LbfgsOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratics_converge_within_dimension_plus_five(seed in 0u64..10_000, n in 1usize..=20, log_cond in 0.0f64..4.0) {
        let (h, c) = quadratic(seed, n, 10f64.powf(log_cond));
        let f = |x: &Vector| {
            let r = x - &c;
            let g = h.dot(&r);
            (0.5 * r.dot(&g), g)
        };
        let res = minimize(f, Vector::zeros(n), &tight()).unwrap();
        let gnorm = res.gradient.dot(&res.gradient).sqrt();
        prop_assert!(gnorm <= 1e-8, "gradient norm {gnorm:e}");
        prop_assert!(res.iterations <= n + 5, "{} iterations for n = {n}", res.iterations);
        prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn history_never_increases_on_nonconvex(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let shift: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let f = |x: &Vector| {
            let mut v = 0.0;
            let mut g = Vector::zeros(4);
            for i in 0..4 {
                let t = x[i] - shift[i];
                v += t.sin() * 2.0 + 0.1 * t * t * t * t;
                g[i] = 2.0 * t.cos() + 0.4 * t * t * t;
            }
            (v, g)
        };
        let x0 = Vector::from_shape_fn(4, |_| r.random_range(-3.0..3.0));
        let res = minimize(f, x0, &LbfgsOptions::default()).unwrap();
        prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(res.history.len(), res.iterations + 1);
    }

    #[test]
    fn two_loop_gives_descent(seed in 0u64..10_000, pairs in 1usize..8) {
        let mut r = rng(seed);
        let n = 6;
        let (h, _) = quadratic(seed, n, 50.0);
        let mut hist = Vec::new();
        for _ in 0..pairs {
            let s = Vector::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
            let y = h.dot(&s);
            hist.push(CurvaturePair::new(s, y).unwrap());
        }
        let g = Vector::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
        let d = two_loop_direction(&g, hist.iter());
        prop_assert!(d.dot(&g) < 0.0);
    }
}

#[test]
fn exact_pair_on_diagonal_quadratic_gives_newton_direction() {
    let h = Vector::from(vec![1.0, 4.0, 9.0]);
    let s = Vector::from(vec![0.3, -0.2, 0.5]);
    let y = &s * &h;
    let pair = CurvaturePair::new(s.clone(), y).unwrap();
    // A gradient along y: the one-pair update reproduces H⁻¹ there.
    let g = &s * &h * 2.0;
    let d = two_loop_direction(&g, std::iter::once(&pair));
    let newton = -(&g / &h);
    let cos = d.dot(&newton) / (d.dot(&d).sqrt() * newton.dot(&newton).sqrt());
    assert!((1.0 - cos).abs() <= 1e-10);
}

#[test]
fn runs_are_deterministic() {
    let (h, c) = quadratic(5, 12, 300.0);
    let f = |x: &Vector| {
        let r = x - &c;
        let g = h.dot(&r);
        (0.5 * r.dot(&g) + (x[0]).cos(), {
            let mut g = g;
            g[0] -= x[0].sin();
            g
        })
    };
    let a = minimize(f, Vector::ones(12), &LbfgsOptions::default()).unwrap();
    let b = minimize(f, Vector::ones(12), &LbfgsOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn memory_one_still_converges() {
    let (h, c) = quadratic(9, 8, 20.0);
    let f = |x: &Vector| {
        let r = x - &c;
        let g = h.dot(&r);
        (0.5 * r.dot(&g), g)
    };
    let res = minimize(
        f,
        Vector::zeros(8),
        &LbfgsOptions {
            memory: 1,
            ..tight()
        },
    )
    .unwrap();
    assert_eq!(res.termination, Termination::GradientSmall);
}

#[test]
fn iteration_cap_is_respected() {
    let rosen = |x: &Vector| {
        let (a, b) = (x[0], x[1]);
        (
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            Vector::from(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]),
        )
    };
    let res = minimize(
        rosen,
        Vector::from(vec![-1.2, 1.0]),
        &LbfgsOptions {
            max_iterations: 3,
            ..LbfgsOptions::default()
        },
    )
    .unwrap();
    assert_eq!(res.iterations, 3);
    assert_eq!(res.termination, Termination::MaxIterations);
}
