//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Directions come from the two-loop recursion over the most recent
//! curvature pairs; the line search follows the bracketing/zoom scheme of
//! Nocedal & Wright (Algorithms 3.5 and 3.6) with safeguarded cubic
//! interpolation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inf_norm, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Stop when `‖∇f‖∞` falls to this value.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step lowers `f` by no more than this times
    /// `max(1, |f|)`.
    pub relative_value_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            memory: 100,
            gradient_tolerance: 1e-6,
            relative_value_tolerance: 1e-9,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidInput(
                "L-BFGS memory must be at least 1".into(),
            ));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "line search needs 0 < c1 < c2 < 1 (c1={}, c2={})",
                self.c1, self.c2
            )));
        }
        if !(self.gradient_tolerance >= 0.0) || !(self.relative_value_tolerance >= 0.0) {
            return Err(Error::InvalidInput(
                "L-BFGS tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientSmall,
    ValueStalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub minimizer: Vector,
    pub value: f64,
    pub gradient: Vector,
    /// `f(x0)` followed by the value after each accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

/// One stored curvature pair with `rho = 1 / (sᵀy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vector,
    pub y: Vector,
    pub rho: f64,
}

impl CurvaturePair {
    /// Returns `None` when `sᵀy ≤ 1e-10 ‖s‖‖y‖`.
    pub fn new(s: Vector, y: Vector) -> Option<Self> {
        let sy = s.dot(&y);
        let bound = 1e-10 * s.dot(&s).sqrt() * y.dot(&y).sqrt();
        if sy > bound && sy.is_finite() {
            Some(Self {
                s,
                y,
                rho: 1.0 / sy,
            })
        } else {
            None
        }
    }
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian
/// approximation `H` built from `history` (oldest first), with initial
/// scaling `sᵀy / yᵀy` of the newest pair.
pub fn two_loop_direction<'a, I>(gradient: &Vector, history: I) -> Vector
where
    I: IntoIterator<Item = &'a CurvaturePair>,
    I::IntoIter: DoubleEndedIterator + Clone,
{
    let pairs = history.into_iter();
    let mut q = gradient.clone();
    let mut alphas = Vec::new();
    for p in pairs.clone().rev() {
        let a = p.rho * p.s.dot(&q);
        q.scaled_add(-a, &p.y);
        alphas.push(a);
    }
    if let Some(last) = pairs.clone().next_back() {
        let gamma = 1.0 / (last.rho * last.y.dot(&last.y));
        q *= gamma;
    }
    for (p, a) in pairs.zip(alphas.into_iter().rev()) {
        let b = p.rho * p.y.dot(&q);
        q.scaled_add(a - b, &p.s);
    }
    -q
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vector,
    gradient: Vector,
}

enum Search {
    Found(Probe),
    /// No strong Wolfe point; carries the lowest point seen if it improved on
    /// the start.
    Failed(Option<Probe>),
}

const MAX_ZOOM: usize = 50;
const MAX_BRACKET: usize = 50;

fn evaluate<F>(f: &mut F, x: &Vector, d: &Vector, alpha: f64) -> Probe
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    let xt = x + &(d * alpha);
    let (value, gradient) = f(&xt);
    let (value, slope) = if value.is_finite() && gradient.iter().all(|g| g.is_finite()) {
        (value, gradient.dot(d))
    } else {
        (f64::INFINITY, f64::NAN)
    };
    Probe {
        alpha,
        value,
        slope,
        x: xt,
        gradient,
    }
}

/// Minimizer of the cubic interpolating two points with slopes, clamped into
/// the safeguarded interior of `[lo, hi]`; bisection when degenerate.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a0, a1) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a0 + a1);
    if !hi.value.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a0 - a1);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (a1 - a0).signum() * disc.sqrt();
    let t = a1 - (a1 - a0) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = (a0.min(a1), a0.max(a1));
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}

fn line_search<F>(
    f: &mut F,
    x: &Vector,
    f0: f64,
    slope0: f64,
    d: &Vector,
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Search
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    let start = Probe {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        x: x.clone(),
        gradient: Vector::zeros(0),
    };
    // Near a minimizer the required decrease can fall below the rounding
    // noise of `f`; then no increase is all that can be asked for.
    let noise = 4.0 * f64::EPSILON * f0.abs();
    let armijo = |p: &Probe| {
        let required = opts.c1 * p.alpha * slope0;
        p.value <= f0 + required || (-required <= noise && p.value <= f0)
    };
    let curvature = |p: &Probe| p.slope.abs() <= -opts.c2 * slope0;

    let mut best: Option<Probe> = None;
    let keep_best = |p: &Probe, best: &mut Option<Probe>| {
        if p.value < f0 && best.as_ref().is_none_or(|b| p.value < b.value) {
            *best = Some(Probe {
                alpha: p.alpha,
                value: p.value,
                slope: p.slope,
                x: p.x.clone(),
                gradient: p.gradient.clone(),
            });
        }
    };

    let mut prev = start;
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    let mut bracketed = false;
    let mut i = 0;
    loop {
        let cur = evaluate(f, x, d, alpha);
        keep_best(&cur, &mut best);
        if !armijo(&cur) || (i > 0 && cur.value >= prev.value) {
            lo = prev;
            hi = cur;
            bracketed = true;
            break;
        }
        if curvature(&cur) {
            if i == 0 {
                // Secant step on the directional derivative; exact when f is
                // quadratic along d.
                let a_s = cur.alpha * slope0 / (slope0 - cur.slope);
                if a_s.is_finite() && a_s > 0.0 && (a_s - cur.alpha).abs() > 1e-3 * cur.alpha {
                    let refined = evaluate(f, x, d, a_s);
                    if armijo(&refined) && curvature(&refined) && refined.value <= cur.value {
                        return Search::Found(refined);
                    }
                }
            }
            return Search::Found(cur);
        }
        if cur.slope >= 0.0 {
            lo = cur;
            hi = prev;
            bracketed = true;
            break;
        }
        i += 1;
        if i >= MAX_BRACKET {
            lo = cur;
            hi = prev;
            break;
        }
        alpha *= 2.0;
        prev = cur;
    }
    if !bracketed {
        return Search::Failed(best);
    }

    for _ in 0..MAX_ZOOM {
        let a = interpolate(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1e-300) {
            break;
        }
        let cur = evaluate(f, x, d, a);
        keep_best(&cur, &mut best);
        if !armijo(&cur) || cur.value >= lo.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Search::Found(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Search::Failed(best)
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient; a non-finite
/// value at a trial point makes the line search shorten the step.
pub fn minimize<F>(mut f: F, x0: Vector, opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&Vector) -> (f64, Vector),
{
    opts.validate()?;
    let (mut fx, mut g) = f(&x0);
    if !fx.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(
            "objective is not finite at the starting point".into(),
        ));
    }
    if g.len() != x0.len() {
        return Err(Error::dims("gradient length", x0.len(), g.len()));
    }
    let mut x = x0;
    let mut history = vec![fx];
    let mut pairs: VecDeque<CurvaturePair> = VecDeque::with_capacity(opts.memory.min(1024));
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g.view()) <= opts.gradient_tolerance {
            break Termination::GradientSmall;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = two_loop_direction(&g, pairs.iter());
        let mut slope = g.dot(&d);
        if !(slope < 0.0) || !slope.is_finite() {
            pairs.clear();
            d = -&g;
            slope = g.dot(&d);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / inf_norm(&g.view())).min(1.0)
        } else {
            1.0
        };

        let probe = match line_search(&mut f, &x, fx, slope, &d, alpha0, opts) {
            Search::Found(p) => p,
            Search::Failed(best) => {
                if let Some(p) = best {
                    x = p.x;
                    fx = p.value;
                    g = p.gradient;
                    history.push(fx);
                    iterations += 1;
                }
                break Termination::LineSearchFailed;
            }
        };

        iterations += 1;
        let s = &probe.x - &x;
        let y = &probe.gradient - &g;
        let decrease = fx - probe.value;
        let scale = fx.abs().max(1.0);
        x = probe.x;
        fx = probe.value;
        g = probe.gradient;
        history.push(fx);

        if let Some(pair) = CurvaturePair::new(s, y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back(pair);
        }
        if decrease <= opts.relative_value_tolerance * scale {
            break if inf_norm(&g.view()) <= opts.gradient_tolerance {
                Termination::GradientSmall
            } else {
                Termination::ValueStalled
            };
        }
    };

    Ok(LbfgsResult {
        minimizer: x,
        value: fx,
        gradient: g,
        history,
        iterations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn half_norm_sq(x: &Vector) -> (f64, Vector) {
        (0.5 * x.dot(x), x.clone())
    }

    fn rosenbrock(x: &Vector) -> (f64, Vector) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = array![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a)
        ];
        (f, g)
    }

    #[test]
    fn quadratic_converges_quickly() {
        let opts = LbfgsOptions {
            gradient_tolerance: 1e-10,
            ..Default::default()
        };
        let r = minimize(half_norm_sq, array![3.0, -4.0], &opts).unwrap();
        assert!(r.minimizer.dot(&r.minimizer).sqrt() <= 1e-8);
        assert!(r.iterations <= 5, "took {} iterations", r.iterations);
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let r = minimize(rosenbrock, array![-1.2, 1.0], &LbfgsOptions::default()).unwrap();
        assert!((r.minimizer[0] - 1.0).abs() < 1e-5, "{:?}", r);
        assert!((r.minimizer[1] - 1.0).abs() < 1e-5, "{:?}", r);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = minimize(half_norm_sq, array![0.0, 0.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::GradientSmall);
        assert_eq!(r.minimizer, array![0.0, 0.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn non_finite_start_rejected() {
        let bad = |_: &Vector| (f64::NAN, array![0.0]);
        assert!(matches!(
            minimize(bad, array![1.0], &LbfgsOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn options_validated() {
        let opts = LbfgsOptions {
            memory: 0,
            ..Default::default()
        };
        assert!(minimize(half_norm_sq, array![1.0], &opts).is_err());
        let opts = LbfgsOptions {
            c1: 0.95,
            ..Default::default()
        };
        assert!(minimize(half_norm_sq, array![1.0], &opts).is_err());
    }

    #[test]
    fn empty_history_is_steepest_descent() {
        let g = array![1.0, -2.0, 0.5];
        let d = two_loop_direction(&g, std::iter::empty());
        assert_eq!(d, -g);
    }

    #[test]
    fn single_pair_on_diagonal_quadratic_gives_newton_direction() {
        // f = ½ xᵀ diag(h) x with isotropic pair: s along a Newton step
        let h = array![2.0, 2.0];
        let s = array![0.3, -0.7];
        let y = &s * &h;
        let pair = CurvaturePair::new(s, y).unwrap();
        let g = array![1.5, 4.0];
        let d = two_loop_direction(&g, [pair].iter());
        let newton = -(&g / &h);
        assert!((&d - &newton).iter().all(|v| v.abs() < 1e-10));

        // anisotropic H: the secant condition makes the step exact along y
        let h = array![1.0, 9.0, 4.0];
        let s = array![0.2, -0.1, 0.5];
        let y = &s * &h;
        let pair = CurvaturePair::new(s, y.clone()).unwrap();
        let g = &y * 2.5;
        let d = two_loop_direction(&g, [pair].iter());
        let newton = -(&g / &h);
        assert!((&d - &newton).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn bad_curvature_pair_skipped() {
        assert!(CurvaturePair::new(array![1.0, 0.0], array![-1.0, 0.0]).is_none());
        assert!(CurvaturePair::new(array![1.0, 0.0], array![0.0, 1.0]).is_none());
    }

    #[test]
    fn deterministic_iterates() {
        let a = minimize(rosenbrock, array![-1.2, 1.0], &LbfgsOptions::default()).unwrap();
        let b = minimize(rosenbrock, array![-1.2, 1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
