//! ADAM and limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.1, beta1: 0.9, beta2: 0.9, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub theta: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(theta: Vec<f64>, cfg: AdamConfig) -> Self {
        let n = theta.len();
        Self { theta, m: vec![0.0; n], v: vec![0.0; n], t: 0, cfg }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(state: &mut AdamState, grad: &[f64]) {
    assert_eq!(grad.len(), state.theta.len(), "gradient length mismatch");
    let AdamConfig { lr, beta1, beta2, eps } = state.cfg;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((th, m), v), &g) in state.theta.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(grad) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *th -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 100, c1: 1e-4, c2: 0.9, max_line_search: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    LossTolerance,
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFiniteLoss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iterations: usize,
    pub loss_tolerance: f64,
    pub grad_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimStep<'a> {
    pub iteration: usize,
    pub theta: &'a [f64],
    pub value: f64,
    pub grad: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub calls: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone)]
struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), kept inside
/// the middle 80% of the bracket; falls back to bisection.
fn interpolate(a: &Probe, b: &Probe) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a, b) } else { (b, a) };
    let width = hi.alpha - lo.alpha;
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.alpha - hi.alpha);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mut t = f64::NAN;
    if disc >= 0.0 {
        let d2 = disc.sqrt();
        t = hi.alpha - width * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    }
    let (min, max) = (lo.alpha + 0.1 * width, hi.alpha - 0.1 * width);
    if !t.is_finite() || t < min || t > max {
        0.5 * (lo.alpha + hi.alpha)
    } else {
        t
    }
}

/// L-BFGS over a callable returning `(value, gradient)`.
///
/// `observe` sees the starting point (iteration 0) and every accepted step.
/// Values at accepted steps never increase.
pub fn lbfgs_minimize<F, O>(mut fg: F, theta0: &[f64], cfg: &LbfgsConfig, stop: &StopRule, mut observe: O) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnMut(&OptimStep<'_>) -> Result<()>,
{
    let mut calls = 0usize;
    let mut x = theta0.to_vec();
    let (mut f, mut g) = fg(&x)?;
    calls += 1;
    observe(&OptimStep { iteration: 0, theta: &x, value: f, grad: &g })?;

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let finish = |x: Vec<f64>, value: f64, iterations: usize, calls: usize, termination: Termination| OptimResult {
        theta: x,
        value,
        iterations,
        calls,
        termination,
    };

    for k in 0..stop.max_iterations {
        if !f.is_finite() {
            return Ok(finish(x, f, k, calls, Termination::NonFiniteLoss));
        }
        if f <= stop.loss_tolerance {
            return Ok(finish(x, f, k, calls, Termination::LossTolerance));
        }
        if inf_norm(&g) < stop.grad_tolerance {
            return Ok(finish(x, f, k, calls, Termination::GradientTolerance));
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope0 = dot(&g, &dir);
        if !(slope0 < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope0 = -dot(&g, &g);
        }
        let alpha0 = if hist.is_empty() { (1.0 / inf_norm(&dir)).min(1.0) } else { 1.0 };

        let probe = |alpha: f64, fg: &mut F, calls: &mut usize| -> Result<Probe> {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let (value, grad) = fg(&xt)?;
            *calls += 1;
            let slope = dot(&grad, &dir);
            Ok(Probe { alpha, value, slope, x: xt, grad })
        };

        let start = Probe { alpha: 0.0, value: f, slope: slope0, x: x.clone(), grad: g.clone() };
        let armijo = |p: &Probe| p.value <= f + cfg.c1 * p.alpha * slope0;
        let curvature = |p: &Probe| p.slope.abs() <= -cfg.c2 * slope0;

        let mut accepted: Option<Probe> = None;
        let mut evals = 0usize;
        let mut prev = start;
        let mut alpha = alpha0;
        let mut bracket: Option<(Probe, Probe)> = None;
        while evals < cfg.max_line_search {
            let cur = probe(alpha, &mut fg, &mut calls)?;
            evals += 1;
            if !cur.value.is_finite() || !armijo(&cur) || (prev.alpha > 0.0 && cur.value >= prev.value) {
                bracket = Some((prev.clone(), cur));
                break;
            }
            if curvature(&cur) {
                accepted = Some(cur);
                break;
            }
            if cur.slope >= 0.0 {
                bracket = Some((cur, prev.clone()));
                break;
            }
            alpha = (2.0 * alpha).min(1e6);
            prev = cur;
        }
        if accepted.is_none() && bracket.is_none() {
            // Every probe decreased the value but the slope stayed steep; take the last one.
            accepted = Some(prev).filter(|p| p.alpha > 0.0);
        }
        if let Some((mut lo, mut hi)) = bracket {
            while evals < cfg.max_line_search {
                let a = if hi.value.is_finite() { interpolate(&lo, &hi) } else { 0.5 * (lo.alpha + hi.alpha) };
                let cur = probe(a, &mut fg, &mut calls)?;
                evals += 1;
                if !cur.value.is_finite() || !armijo(&cur) || cur.value >= lo.value {
                    hi = cur;
                } else {
                    if curvature(&cur) {
                        accepted = Some(cur);
                        break;
                    }
                    if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                        hi = lo;
                    }
                    lo = cur;
                }
                if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                    break;
                }
            }
            if accepted.is_none() && lo.alpha > 0.0 && lo.value < f {
                // Sufficient decrease holds at `lo` even if the curvature test does not.
                accepted = Some(lo);
            }
        }

        let Some(step) = accepted else {
            return Ok(finish(x, f, k, calls, Termination::LineSearchFailed));
        };
        debug_assert!(step.value <= f);
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == cfg.memory.max(1) {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        f = step.value;
        g = step.grad;
        observe(&OptimStep { iteration: k + 1, theta: &x, value: f, grad: &g })?;
    }
    let termination = if !f.is_finite() {
        Termination::NonFiniteLoss
    } else if f <= stop.loss_tolerance {
        Termination::LossTolerance
    } else {
        Termination::MaxIterations
    };
    Ok(finish(x, f, stop.max_iterations, calls, termination))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(vec![0.3, -1.2], AdamConfig::default());
        adam_step(&mut s, &[0.0, 0.0]);
        assert_eq!(s.theta, vec![0.3, -1.2]);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let g = [0.5, -2.0, 1e-3];
        let mut s = AdamState::new(vec![1.0; 3], cfg);
        adam_step(&mut s, &g);
        for (th, gi) in s.theta.iter().zip(g) {
            let want = 1.0 - cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((th - want).abs() < 1e-12, "{th} vs {want}");
        }
    }

    #[test]
    fn adam_moves_monotonically_against_constant_gradient() {
        let cfg = AdamConfig { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut s = AdamState::new(vec![0.0], cfg);
        // Scalar re-simulation of the update rule as an oracle.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        let mut last = 0.0;
        for t in 1..=100 {
            adam_step(&mut s, &[0.7]);
            m = 0.9 * m + 0.1 * 0.7;
            v = 0.999 * v + 0.001 * 0.49;
            x -= 0.05 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!(s.theta[0] < last);
            assert!((s.theta[0] - x).abs() < 1e-12);
            last = s.theta[0];
        }
    }

    fn quadratic(c: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + '_ {
        move |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
            Ok((dot(&d, &d), d.iter().map(|v| 2.0 * v).collect()))
        }
    }

    #[test]
    fn lbfgs_quadratic_bowl() {
        let c = vec![1.0, -2.0, 0.5, 3.0, -0.25];
        let stop = StopRule { max_iterations: 50, loss_tolerance: 0.0, grad_tolerance: 1e-10 };
        let mut values = Vec::new();
        let res = lbfgs_minimize(quadratic(&c), &[0.0; 5], &LbfgsConfig::default(), &stop, |s| {
            values.push(s.value);
            Ok(())
        })
        .unwrap();
        assert!(res.iterations <= 50);
        for (a, b) in res.theta.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let rosen = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        };
        let stop = StopRule { max_iterations: 200, loss_tolerance: 0.0, grad_tolerance: 1e-9 };
        let mut last = f64::INFINITY;
        let res = lbfgs_minimize(rosen, &[-1.2, 1.0], &LbfgsConfig::default(), &stop, |s| {
            assert!(s.value <= last);
            last = s.value;
            Ok(())
        })
        .unwrap();
        assert!((res.theta[0] - 1.0).abs() < 1e-6 && (res.theta[1] - 1.0).abs() < 1e-6, "{:?}", res);
    }

    #[test]
    fn lbfgs_reports_loss_tolerance() {
        let c = vec![2.0];
        let stop = StopRule { max_iterations: 50, loss_tolerance: 1e-6, grad_tolerance: 0.0 };
        let res = lbfgs_minimize(quadratic(&c), &[0.0], &LbfgsConfig::default(), &stop, |_| Ok(())).unwrap();
        assert_eq!(res.termination, Termination::LossTolerance);
    }

    #[test]
    fn lbfgs_line_search_failure_keeps_best() {
        // A function whose gradient points the wrong way: no step can decrease it.
        let liar = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![-1.0])) };
        let stop = StopRule { max_iterations: 10, loss_tolerance: 0.0, grad_tolerance: 0.0 };
        let res = lbfgs_minimize(liar, &[0.5], &LbfgsConfig::default(), &stop, |_| Ok(())).unwrap();
        assert_eq!(res.termination, Termination::LineSearchFailed);
        assert!(res.value <= 0.25);
    }
}
