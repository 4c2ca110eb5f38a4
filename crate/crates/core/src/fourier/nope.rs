//! Nonlinear intensity-matching reconstructor.
//!
//! Minimises J(phi) = 0.5 ||F(phi) - I||^2 with exact adjoint gradients.
//! Search directions live in the metric of the Sobolev-type filter
//! (1 + |xi|^2)^(-s): with `memory = 0` the direction is the filtered
//! gradient (scaled by a Barzilai-Borwein factor), otherwise a limited-memory
//! BFGS update is built on top of that filter. Steps follow a halving
//! backtracking line search with an Armijo condition, so J never increases.

use ndarray::{Array2, Zip};

use crate::fft::Dft2;
use crate::fourier::sensor::FourierSensor;
use crate::grid::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Zero,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { initial_step: 1.0, armijo: 1e-4, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NopeOptions {
    /// Smoothness index of the preconditioner.
    pub s: f64,
    pub start: Start,
    pub max_iters: usize,
    /// Stop once the filtered gradient norm falls below this value.
    pub grad_tol: f64,
    pub line_search: LineSearch,
    /// Number of stored correction pairs (0 = filtered gradient descent).
    pub memory: usize,
}

impl Default for NopeOptions {
    fn default() -> Self {
        Self { s: 11.0 / 6.0, start: Start::Linear, max_iters: 300, grad_tol: 1e-8, line_search: LineSearch::default(), memory: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct NopeResult {
    pub phase: Array2<f64>,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

/// Frequency filter (1 + |xi|^2)^(-s) on the pupil grid, xi in frequency pixels.
pub struct Preconditioner {
    filter: Array2<f64>,
    mask: Array2<bool>,
}

impl Preconditioner {
    pub fn new(mask: &Array2<bool>, s: f64) -> Self {
        let n = mask.nrows();
        let h = (n / 2) as f64;
        let filter = Array2::from_shape_fn((n, n), |(i, j)| {
            let (a, b) = (i as f64 - h, j as f64 - h);
            (1.0 + a * a + b * b).powf(-s)
        });
        Self { filter, mask: mask.clone() }
    }

    pub fn apply(&self, g: &Array2<f64>) -> Array2<f64> {
        let n = g.nrows();
        let plan = Dft2::cached(n);
        let mut z = g.mapv(|v| C64::new(v, 0.0));
        plan.forward(&mut z);
        Zip::from(&mut z).and(&self.filter).for_each(|a, &f| *a *= f);
        plan.inverse(&mut z);
        let mut out = Array2::zeros((n, n));
        Zip::from(&mut out).and(&z).and(&self.mask).for_each(|o, a, &m| {
            if m {
                *o = a.re
            }
        });
        out
    }
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Run the reconstructor from `phi0` against measured intensity `data`.
pub fn nonlinear_solve(sensor: &FourierSensor, data: &Array2<f64>, phi0: &Array2<f64>, opts: &NopeOptions) -> NopeResult {
    let pre = Preconditioner::new(&sensor.mask, opts.s);
    let mut phi = phi0.clone();
    Zip::from(&mut phi).and(&sensor.mask).for_each(|p, &m| {
        if !m {
            *p = 0.0
        }
    });
    let (mut j, mut g) = sensor.objective_and_gradient(&phi, data);
    let mut history = vec![j];
    let mut pairs: Vec<(Array2<f64>, Array2<f64>, f64)> = Vec::new();
    let mut gamma: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut warning = None;
    let ls = opts.line_search;

    while iterations < opts.max_iters {
        let pg = pre.apply(&g);
        if j == 0.0 || dot(&pg, &pg).sqrt() <= opts.grad_tol {
            converged = true;
            break;
        }
        // Fallback scale: a step of at most one radian anywhere.
        let first = 1.0 / pg.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut attempt = 0;
        let accepted = loop {
            let d = if attempt == 0 && !pairs.is_empty() {
                two_loop(&g, &pairs, gamma.unwrap_or(first), &pre)
            } else {
                let scale = if attempt == 0 { gamma.unwrap_or(first) } else { first };
                pg.mapv(|v| -scale * v)
            };
            let gd = dot(&g, &d);
            if gd < 0.0 {
                let mut t = ls.initial_step;
                let mut found = None;
                for _ in 0..=ls.max_halvings {
                    let trial = &phi + &(&d * t);
                    let (jt, gt) = sensor.objective_and_gradient(&trial, data);
                    if jt <= j + ls.armijo * t * gd {
                        found = Some((trial, jt, gt, t));
                        break;
                    }
                    t *= 0.5;
                }
                if let Some(f) = found {
                    break Some((f, d));
                }
            }
            if attempt >= 1 {
                break None;
            }
            attempt += 1;
            pairs.clear();
        };
        let Some(((trial, jt, gt, t), d)) = accepted else {
            warning = Some(format!("line search failed after {iterations} iterations"));
            break;
        };
        let s = &d * t;
        let y = &gt - &g;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            let py = pre.apply(&y);
            let ypy = dot(&y, &py);
            if ypy > 0.0 {
                gamma = Some(sy / ypy);
            }
            if opts.memory > 0 {
                pairs.push((s, y, 1.0 / sy));
                if pairs.len() > opts.memory {
                    pairs.remove(0);
                }
            }
        }
        phi = trial;
        j = jt;
        g = gt;
        history.push(j);
        iterations += 1;
    }
    if !converged && warning.is_none() {
        warning = Some(format!("stopped at max_iters = {} before reaching grad_tol", opts.max_iters));
    }
    NopeResult { phase: phi, history, iterations, converged, warning }
}

fn two_loop(g: &Array2<f64>, pairs: &[(Array2<f64>, Array2<f64>, f64)], gamma: f64, pre: &Preconditioner) -> Array2<f64> {
    let mut q = g.clone();
    let mut alpha = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        q.scaled_add(-alpha[k], y);
    }
    let mut r = pre.apply(&q) * gamma;
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &r);
        r.scaled_add(alpha[k] - beta, s);
    }
    r.mapv_inplace(|v| -v);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::shape::{ShapeFunction, ShapeKind};
    use crate::grid::ApertureSpec;

    #[test]
    fn exact_data_at_zero_stops_immediately() {
        let mask = ApertureSpec::disc(16).mask(16).unwrap();
        let sen = FourierSensor::new(&mask, ShapeFunction::new(ShapeKind::Pyramid4, 1.0), 2, None).unwrap();
        let data = sen.intensity(&Array2::zeros((16, 16)));
        let r = nonlinear_solve(&sen, &data, &Array2::zeros((16, 16)), &NopeOptions::default());
        assert!(r.iterations <= 2);
        assert!(r.phase.iter().all(|v| v.abs() < 1e-12));
        assert!(r.converged);
    }

    #[test]
    fn objective_never_increases_and_fits_smooth_phase() {
        let n = 16;
        let mask = ApertureSpec::disc(16).mask(n).unwrap();
        let sen = FourierSensor::new(&mask, ShapeFunction::new(ShapeKind::Pyramid4, 1.0), 4, None).unwrap();
        let truth = Array2::from_shape_fn((n, n), |(i, j)| if mask[[i, j]] { 0.6 * ((i as f64) / 5.0).sin() + 0.03 * j as f64 } else { 0.0 });
        let data = sen.intensity(&truth);
        for memory in [0usize, 10] {
            let opts = NopeOptions { memory, max_iters: 200, ..Default::default() };
            let r = nonlinear_solve(&sen, &data, &Array2::zeros((n, n)), &opts);
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(r.history.last().unwrap() < &(1e-3 * r.history[0]));
        }
    }

    #[test]
    fn preconditioner_is_symmetric() {
        let mask = ApertureSpec::disc(14).mask(16).unwrap();
        let p = Preconditioner::new(&mask, 11.0 / 6.0);
        let a = Array2::from_shape_fn((16, 16), |(i, j)| if mask[[i, j]] { ((i * 3 + j) % 7) as f64 } else { 0.0 });
        let b = Array2::from_shape_fn((16, 16), |(i, j)| if mask[[i, j]] { ((i + 5 * j) % 4) as f64 - 1.5 } else { 0.0 });
        let l = dot(&p.apply(&a), &b);
        let r = dot(&a, &p.apply(&b));
        assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
        assert!(dot(&p.apply(&a), &a) > 0.0);
    }
}
