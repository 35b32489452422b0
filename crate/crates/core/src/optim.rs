//! Projected L-BFGS ascent for box-constrained smooth maximisation.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the projected gradient infinity norm falls below this.
    pub tolerance: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            memory: 10,
            max_iterations: 500,
            tolerance: 1e-6,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

/// Per-variable box; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Whether variable `i` is pinned at a bound by an ascent gradient `g`.
    fn blocked(&self, x: &[f64], g: &[f64], i: usize) -> bool {
        (x[i] <= self.lower[i] && g[i] < 0.0) || (x[i] >= self.upper[i] && g[i] > 0.0)
    }
}

/// Maximise `f` over the box. `f(x, grad)` returns the value and writes the gradient.
pub fn maximize<F>(x0: &[f64], bounds: &Bounds, opts: &AscentOptions, mut f: F) -> Result<AscentOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    if bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(Error::invalid("bounds length does not match the variable count"));
    }
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure);
    }
    let mut history = vec![fx];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    let mut trial = Trial::new(n);
    let mut spare = Trial::new(n);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        let pg_norm = (0..n)
            .filter(|&i| !bounds.blocked(&x, &g, i))
            .fold(0.0f64, |m, i| m.max(g[i].abs()));
        if pg_norm <= opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        // two-loop recursion on the free subspace (ascent form)
        for i in 0..n {
            d[i] = if bounds.blocked(&x, &g, i) { 0.0 } else { g[i] };
        }
        for (j, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha[j] = a;
            axpy(-a, y, &mut d);
        }
        if let Some((s, y, _)) = mem.back() {
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= scale);
        }
        for (j, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &d);
            axpy(alpha[j] - b, s, &mut d);
        }
        for i in 0..n {
            if bounds.blocked(&x, &g, i) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) <= 0.0 {
            mem.clear();
            for i in 0..n {
                d[i] = if bounds.blocked(&x, &g, i) { 0.0 } else { g[i] };
            }
        }
        let mut step = if mem.is_empty() {
            // without curvature information, move at most one unit
            1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        } else {
            1.0
        };

        let mut accepted = false;
        for attempt in 0..60 {
            if trial.run(&mut f, &x, &d, &g, fx, step, bounds, opts.armijo)? {
                if attempt == 0 {
                    // nearly linear stretch: keep doubling while the value improves
                    for _ in 0..MAX_EXPANSIONS {
                        if !spare.run(&mut f, &x, &d, &g, fx, 2.0 * step, bounds, opts.armijo)?
                            || spare.value <= trial.value
                        {
                            break;
                        }
                        step *= 2.0;
                        std::mem::swap(&mut trial, &mut spare);
                    }
                }
                accepted = true;
                let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                // ascent: curvature pair uses the negated gradient difference
                let y: Vec<f64> = g.iter().zip(&trial.g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if mem.len() == opts.memory {
                        mem.pop_front();
                    }
                    mem.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut trial.x);
                std::mem::swap(&mut g, &mut trial.g);
                fx = trial.value;
                history.push(fx);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if mem.is_empty() {
                // no increase along the projected gradient: stationary to line-search precision
                converged = true;
                break;
            }
            mem.clear();
        }
    }
    Ok(AscentOutcome {
        x,
        value: fx,
        iterations,
        converged,
        history,
    })
}

const MAX_EXPANSIONS: usize = 8;

/// Scratch for one line-search probe.
struct Trial {
    x: Vec<f64>,
    g: Vec<f64>,
    value: f64,
}

impl Trial {
    fn new(n: usize) -> Self {
        Trial {
            x: vec![0.0; n],
            g: vec![0.0; n],
            value: f64::NEG_INFINITY,
        }
    }

    /// Evaluates the projected point `x + step d`; true on sufficient increase.
    #[allow(clippy::too_many_arguments)]
    fn run<F>(&mut self, f: &mut F, x: &[f64], d: &[f64], g: &[f64], fx: f64, step: f64, bounds: &Bounds, armijo: f64) -> Result<bool>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
    {
        for i in 0..x.len() {
            self.x[i] = (x[i] + step * d[i]).clamp(bounds.lower[i], bounds.upper[i]);
        }
        let gain: f64 = (0..x.len()).map(|i| g[i] * (self.x[i] - x[i])).sum();
        self.value = f(&self.x, &mut self.g)?;
        if !self.value.is_finite() {
            return Ok(false);
        }
        if self.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure);
        }
        Ok(self.value >= fx + armijo * gain && self.value >= fx)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
