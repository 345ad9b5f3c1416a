//! Limited-memory BFGS with a strong Wolfe line search (minimization).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient infinity norm falls below this.
    pub gtol: f64,
    /// Sufficient decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 500,
            gtol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No acceptable step along steepest descent; usually the iterate is
    /// already optimal to working precision.
    LineSearchFailed,
    NonFiniteStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after each accepted iteration, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    step: f64,
    f: f64,
    grad: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    /// Value differences below this are treated as rounding noise.
    noise: f64,
    config: &'a LbfgsConfig,
    evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn eval(&mut self, step: f64) -> Point {
        self.evals += 1;
        let trial: Vec<f64> = self
            .x
            .iter()
            .zip(self.dir)
            .map(|(x, d)| x + step * d)
            .collect();
        let (f, grad) = (self.objective)(&trial);
        if f.is_finite() && grad.iter().all(|g| g.is_finite()) {
            let slope = dot(&grad, self.dir);
            Point {
                step,
                f,
                grad,
                slope,
            }
        } else {
            Point {
                step,
                f: f64::INFINITY,
                grad,
                slope: f64::NAN,
            }
        }
    }

    /// Sufficient decrease, or, once value differences are at rounding
    /// level, the approximate Wolfe test on the directional derivative.
    fn armijo(&self, p: &Point) -> bool {
        if p.f <= self.f0 + self.config.c1 * p.step * self.slope0 {
            return true;
        }
        p.f <= self.f0 + self.noise && p.slope <= (1.0 - 2.0 * self.config.c1) * -self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.config.c2 * self.slope0
    }

    /// Returns a point satisfying the strong Wolfe conditions, or the best
    /// sufficient-decrease point found, or `None`.
    fn run(&mut self, initial: f64) -> Option<Point> {
        let mut prev = Point {
            step: 0.0,
            f: self.f0,
            grad: Vec::new(),
            slope: self.slope0,
        };
        let mut step = initial;
        let mut first = true;
        while self.evals < self.config.max_line_search {
            let p = self.eval(step);
            if !self.armijo(&p) || (!first && p.f > prev.f + self.noise) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            step = p.step * 2.0;
            prev = p;
            first = false;
        }
        (prev.step > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.evals < self.config.max_line_search {
            let width = (hi.step - lo.step).abs();
            if width <= 1e-16 * hi.step.abs().max(lo.step.abs()) {
                break;
            }
            let step = interpolate(&lo, &hi);
            let p = self.eval(step);
            if !self.armijo(&p) || p.f > lo.f + self.noise {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Some(p);
                }
                if p.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        (lo.step > 0.0).then_some(lo)
    }
}

/// Safeguarded cubic interpolation between the bracket ends, falling back
/// to bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.step, hi.step);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    if t.is_finite() && t >= left + margin && t <= right - margin {
        t
    } else {
        mid
    }
}

/// Minimizes `objective`, which returns the value and gradient; a
/// non-finite value is treated as `+inf` so the line search backs off.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, config: &LbfgsConfig) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut grad) = objective(&x);
    let mut trace = vec![f];
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return LbfgsOutcome {
            x,
            f,
            grad,
            iterations: 0,
            termination: Termination::NonFiniteStart,
            trace,
        };
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut iterations = 0;
    let termination = loop {
        if inf_norm(&grad) < config.gtol {
            break Termination::Converged;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &grad);
        }
        let initial = if history.is_empty() {
            1.0 / dot(&grad, &grad).sqrt().max(1.0)
        } else {
            1.0
        };
        let accepted = LineSearch {
            objective: &mut objective,
            x: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            noise: 1e-10 * f.abs().max(1.0),
            config,
            evals: 0,
        }
        .run(initial);
        let Some(p) = accepted else {
            if history.is_empty() {
                break Termination::LineSearchFailed;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = dir.iter().map(|d| p.step * d).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s.clone(), y, 1.0 / sy));
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        f = p.f;
        grad = p.grad;
        iterations += 1;
        trace.push(f);
    };
    LbfgsOutcome {
        x,
        f,
        grad,
        iterations,
        termination,
        trace,
    }
}

fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (k, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn minimizes_rosenbrock() {
        let out = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default());
        assert_eq!(out.termination, Termination::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_converges_quickly() {
        let diag = [1.0, 10.0, 100.0, 0.5];
        let f = |x: &[f64]| {
            let v = x.iter().zip(&diag).map(|(x, d)| 0.5 * d * x * x).sum();
            (v, x.iter().zip(&diag).map(|(x, d)| d * x).collect())
        };
        let out = minimize(f, vec![1.0; 4], &LbfgsConfig::default());
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.iterations < 30);
    }

    #[test]
    fn backs_off_from_non_finite_region() {
        // -ln(1 - x) is undefined for x >= 1; minimum of x^2 - ln(1 - x) is inside.
        let f = |x: &[f64]| {
            let v = x[0] * x[0] - (1.0 - x[0]).ln();
            (
                if x[0] < 1.0 { v } else { f64::NAN },
                vec![2.0 * x[0] + 1.0 / (1.0 - x[0])],
            )
        };
        let out = minimize(f, vec![-5.0], &LbfgsConfig::default());
        assert_eq!(out.termination, Termination::Converged);
        // 2x + 1/(1-x) = 0 -> x = (1 - sqrt 3) / 2
        assert!((out.x[0] - (1.0 - 3f64.sqrt()) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap() {
        let cfg = LbfgsConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let out = minimize(rosenbrock, vec![-1.2, 1.0], &cfg);
        assert_eq!(out.termination, Termination::MaxIterations);
        assert_eq!(out.iterations, 2);
    }
}
