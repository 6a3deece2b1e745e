//! First-order and derivative-free minimizers for smooth losses.
//!
//! Every minimizer records the loss after each accepted step. A non-finite
//! loss at any accepted point aborts with [`Error::Diverged`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm falls to this value.
    pub grad_tol: f64,
    /// Stop when an accepted step changes the loss by less than this
    /// fraction of its magnitude.
    pub rel_tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            max_iters: 100_000,
            grad_tol: 1e-8,
            rel_tol: 1e-15,
            armijo: 1e-4,
            initial_step: 1.0,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Stalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Loss at the start point followed by the loss after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(value: f64, iterations: usize, trace: &[f64]) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        let mut trace = trace.to_vec();
        trace.push(value);
        Err(Error::Diverged { iterations, trace })
    }
}

/// Backtracking line search along `dir`. Returns the accepted step length and
/// the new point, value and gradient.
fn backtrack<F>(
    f: &mut F,
    x: &[f64],
    value: f64,
    grad: &[f64],
    dir: &[f64],
    first: f64,
    cfg: &DescentConfig,
) -> Option<(f64, Vec<f64>, f64, Vec<f64>)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slope = dot(grad, dir);
    if !(slope < 0.0) {
        return None;
    }
    let mut t = first;
    let mut trial = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for _ in 0..=cfg.max_backtracks {
        for i in 0..x.len() {
            trial[i] = x[i] + t * dir[i];
        }
        let v = f(&trial, &mut g);
        if v.is_finite() && v <= value + cfg.armijo * t * slope {
            return Some((t, trial, v, g));
        }
        t *= 0.5;
    }
    None
}

/// Steepest descent with Armijo backtracking. The trial step doubles after
/// each success and halves on each rejection.
pub fn gradient_descent<F>(mut f: F, x0: &[f64], cfg: &DescentConfig) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x.len()];
    let mut value = f(&x, &mut grad);
    let mut trace = vec![value];
    check_finite(value, 0, &trace)?;
    let mut step = cfg.initial_step;
    for it in 0..cfg.max_iters {
        if inf_norm(&grad) <= cfg.grad_tol {
            return Ok(Minimum { x, value, trace, iterations: it, reason: StopReason::Gradient });
        }
        let dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let Some((t, nx, nv, ng)) = backtrack(&mut f, &x, value, &grad, &dir, step, cfg) else {
            return Ok(Minimum { x, value, trace, iterations: it, reason: StopReason::LineSearchFailed });
        };
        let decrease = value - nv;
        x = nx;
        value = nv;
        grad = ng;
        trace.push(value);
        step = 2.0 * t;
        if decrease <= cfg.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
            return Ok(Minimum { x, value, trace, iterations: it + 1, reason: StopReason::Stalled });
        }
    }
    Ok(Minimum { x, value, trace, iterations: cfg.max_iters, reason: StopReason::MaxIterations })
}

/// Limited-memory BFGS with Armijo backtracking from a unit step.
pub fn lbfgs<F>(mut f: F, x0: &[f64], memory: usize, cfg: &DescentConfig) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let memory = memory.max(1);
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);
    let mut trace = vec![value];
    check_finite(value, 0, &trace)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(memory);
    for it in 0..cfg.max_iters {
        if inf_norm(&grad) <= cfg.grad_tol {
            return Ok(Minimum { x, value, trace, iterations: it, reason: StopReason::Gradient });
        }
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alphas[k] = rho * dot(&s_hist[k], &q);
            for i in 0..n {
                q[i] -= alphas[k] * y_hist[k][i];
            }
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => cfg.initial_step / inf_norm(&grad).max(1.0),
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for k in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &q);
            for i in 0..n {
                q[i] += (alphas[k] - beta) * s_hist[k][i];
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut accepted = backtrack(&mut f, &x, value, &grad, &dir, 1.0, cfg);
        if accepted.is_none() {
            // quasi-Newton direction failed; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = grad.iter().map(|g| -g).collect();
            let first = cfg.initial_step / inf_norm(&grad).max(1.0);
            accepted = backtrack(&mut f, &x, value, &grad, &dir, first, cfg);
        }
        let Some((_, nx, nv, ng)) = accepted else {
            return Ok(Minimum { x, value, trace, iterations: it, reason: StopReason::LineSearchFailed });
        };
        let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let decrease = value - nv;
        x = nx;
        value = nv;
        grad = ng;
        trace.push(value);
        if decrease <= cfg.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
            return Ok(Minimum { x, value, trace, iterations: it + 1, reason: StopReason::Stalled });
        }
    }
    Ok(Minimum { x, value, trace, iterations: cfg.max_iters, reason: StopReason::MaxIterations })
}

/// Nelder–Mead simplex search. `scale` sets the initial simplex edge; the
/// run stops when the spread of simplex values drops below `cfg.rel_tol`
/// relative to the best value, or after `cfg.max_iters` iterations.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], scale: f64, cfg: &DescentConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i] != 0.0 { scale * p[i].abs().max(1.0) } else { scale };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut trace = vec![values[0]];
    check_finite(values[0], 0, &trace)?;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut order: Vec<usize> = (0..=n).collect();
    for it in 0..cfg.max_iters {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = values[order[0]];
        let worst = values[order[n]];
        if trace.last() != Some(&best) {
            trace.push(best);
        }
        check_finite(best, it, &trace)?;
        if (worst - best).abs() <= cfg.rel_tol.max(1e-15) * best.abs().max(1e-300) {
            let b = order[0];
            return Ok(Minimum { x: simplex[b].clone(), value: best, trace, iterations: it, reason: StopReason::Stalled });
        }
        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for i in 0..n {
                centroid[i] += simplex[k][i] / n as f64;
            }
        }
        let w = order[n];
        let along = |c: f64| -> Vec<f64> { (0..n).map(|i| centroid[i] + c * (simplex[w][i] - centroid[i])).collect() };
        let xr = along(-alpha);
        let fr = f(&xr);
        let second_worst = values[order[n - 1]];
        if fr < best {
            let xe = along(-gamma);
            let fe = f(&xe);
            if fe < fr {
                simplex[w] = xe;
                values[w] = fe;
            } else {
                simplex[w] = xr;
                values[w] = fr;
            }
        } else if fr < second_worst {
            simplex[w] = xr;
            values[w] = fr;
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[w] = xc;
                values[w] = fc;
            } else {
                let b = order[0];
                let anchor = simplex[b].clone();
                for &k in &order[1..] {
                    for i in 0..n {
                        simplex[k][i] = anchor[i] + sigma * (simplex[k][i] - anchor[i]);
                    }
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let b = order[0];
    Ok(Minimum {
        x: simplex[b].clone(),
        value: values[b],
        trace,
        iterations: cfg.max_iters,
        reason: StopReason::MaxIterations,
    })
}

/// Symmetric positive-definite banded matrix, stored as its lower band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    /// `band[i * (p+1) + d]` holds entry `(i, i-d)`.
    band: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        BandedSpd { n, bandwidth, band: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)` (and its mirror). Entries outside the band
    /// are rejected.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bandwidth || hi >= self.n {
            return Err(Error::InvalidInput(format!("entry ({i}, {j}) outside band {}", self.bandwidth)));
        }
        self.band[hi * (self.bandwidth + 1) + d] += v;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bandwidth {
            0.0
        } else {
            self.band[hi * (self.bandwidth + 1) + d]
        }
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.band[i * (self.bandwidth + 1)] += v;
        }
    }

    /// In-place banded Cholesky; returns the factor.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let p = self.bandwidth;
        let w = p + 1;
        let mut l = self.band.clone();
        for i in 0..self.n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                let mut s = l[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(p));
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Singular { condition: f64::INFINITY, nugget: 0.0 });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandedCholesky { n: self.n, bandwidth: p, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.bandwidth;
        let w = p + 1;
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + p + 1).min(self.n) {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}
