//! Joint recovery of unknown maps and scalar parameters from coupled
//! residual losses.
//!
//! Two problems live here. [`CgcPdeProblem`] learns a transform `G` together
//! with the coefficient `a` of the linear target equation. [`NfProblem`] learns
//! a homogeneous quartic `H` that maps Brusselator states onto the radius of
//! the Hopf normal form, together with that radius along the trajectory.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::kernels::{binomial, monomials, KernelSpec};
use crate::optim::{gradient_descent, lbfgs, nelder_mead, BandedSpd, DescentConfig, Minimum, StopReason};
use crate::regression::{FactoredGram, Interpolant, LinearFunctional};

/// Weights of the data, equation and anchor terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: f64,
    pub ode: f64,
    pub anchor: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("data", self.data), ("ode", self.ode), ("anchor", self.anchor)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameters(format!("{name} weight must be finite and nonnegative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Weights that bring each penalty to the size of the norm term at a given
/// state. A term at roundoff level there gets the norm itself as its weight.
fn balancing_weight(scale: f64, term: f64) -> f64 {
    if term > 1e-12 * scale {
        scale / term
    } else {
        scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgcOptimizer {
    /// Exact inner solve for `G` at fixed `a`, backtracking descent on `a`.
    #[default]
    VariableProjection,
    GradientDescent,
    Lbfgs,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub optimizer: CgcOptimizer,
    pub descent: DescentConfig,
    pub lbfgs_memory: usize,
    pub simplex_scale: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            optimizer: CgcOptimizer::default(),
            descent: DescentConfig::default(),
            lbfgs_memory: 10,
            simplex_scale: 0.1,
        }
    }
}

/// Learns `G` and `a` such that `w = G(u)` turns `u_t = u_x − 1/u²` into
/// `w_t = w_x + a w`, which holds when `G + a G′/u² = 0`.
#[derive(Debug, Clone)]
pub struct CgcPdeProblem {
    u_data: Vec<f64>,
    kernel: KernelSpec,
    gamma: f64,
    weights: LossWeights,
    l2_squared: bool,
    free_z: bool,
    nodes: Vec<f64>,
    anchor_index: usize,
    /// `K(X, X) + λI`
    shifted: DMatrix<f64>,
    factor: FactoredGram,
    /// `∂ᵤK(uᵢ, Xⱼ)` for data rows `i` and node columns `j`.
    dgram: DMatrix<f64>,
}

/// Location of the uniqueness anchor `G(1) = 1`.
pub const CGC_ANCHOR: f64 = 1.0;

impl CgcPdeProblem {
    pub fn new(
        u_data: Vec<f64>,
        kernel: KernelSpec,
        gamma: f64,
        weights: LossWeights,
        nugget: f64,
        l2_squared: bool,
        free_z: bool,
    ) -> Result<Self> {
        kernel.validate()?;
        weights.validate()?;
        if u_data.is_empty() {
            return Err(Error::InvalidInput("no data".into()));
        }
        if u_data.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidInput("non-finite data".into()));
        }
        if u_data.contains(&0.0) {
            return Err(Error::Singularity("data value 0 makes 1/u² unbounded".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameters(format!("prior scale must be positive, got {gamma}")));
        }
        if !(nugget > 0.0 && nugget.is_finite()) {
            return Err(Error::InvalidParameters(format!("nugget must be positive, got {nugget}")));
        }
        let mut nodes = u_data.clone();
        let anchor_index = match u_data.iter().position(|&u| (u - CGC_ANCHOR).abs() <= 1e-12) {
            Some(i) => i,
            None => {
                nodes.push(CGC_ANCHOR);
                nodes.len() - 1
            }
        };
        let m = nodes.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                gram[(i, j)] = kernel.deriv(nodes[i], nodes[j], 0, 0)?;
            }
        }
        let factor = FactoredGram::new(&gram, nugget)?;
        let mut shifted = gram;
        for i in 0..m {
            shifted[(i, i)] += factor.nugget();
        }
        let mut dgram = DMatrix::zeros(u_data.len(), m);
        for i in 0..u_data.len() {
            for j in 0..m {
                dgram[(i, j)] = kernel.deriv(u_data[i], nodes[j], 1, 0)?;
            }
        }
        Ok(CgcPdeProblem { u_data, kernel, gamma, weights, l2_squared, free_z, nodes, anchor_index, shifted, factor, dgram })
    }

    /// Returns a copy with different weights.
    pub fn with_weights(&self, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        Ok(CgcPdeProblem { weights, ..self.clone() })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameters(format!("prior scale must be positive, got {gamma}")));
        }
        Ok(CgcPdeProblem { gamma, ..self.clone() })
    }

    /// `data = 1/λ`; the equation and anchor weights make their terms match
    /// the RKHS norm of `state` (both the norm and prior when the prior is
    /// nonzero).
    pub fn balanced_weights(&self, state: &CgcPdeState) -> Result<LossWeights> {
        let unit = self.with_weights(LossWeights { data: 1.0, ode: 1.0, anchor: 1.0 })?;
        let t = cgc_pde_loss(&unit, state)?;
        let scale = if t.norm + t.prior > 0.0 { t.norm + t.prior } else { 1.0 };
        Ok(LossWeights {
            data: 1.0 / self.nugget(),
            ode: balancing_weight(scale, t.ode),
            anchor: balancing_weight(scale, t.anchor),
        })
    }

    pub fn u_data(&self) -> &[f64] {
        &self.u_data
    }

    /// Interpolation nodes: the data followed by the anchor unless a data
    /// value already sits on it.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn nugget(&self) -> f64 {
        self.factor.nugget()
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn l2_squared(&self) -> bool {
        self.l2_squared
    }

    pub fn free_z(&self) -> bool {
        self.free_z
    }

    fn n(&self) -> usize {
        self.u_data.len()
    }

    fn m(&self) -> usize {
        self.nodes.len()
    }

    /// Loss and gradient with `G` written as `Σ βⱼ K(·, Xⱼ)`, so node values are
    /// `g = (K + λI) β`. `x` packs `β`, `a`, then `z1` and `z2` in free mode.
    fn eval_packed(&self, x: &[f64], grad: Option<&mut [f64]>) -> CgcPdeTerms {
        let (n, m) = (self.n(), self.m());
        let beta = DVector::from_column_slice(&x[..m]);
        let a = x[m];
        let g = &self.shifted * &beta;
        let slope = &self.dgram * &beta;
        let inv_u2: Vec<f64> = self.u_data.iter().map(|u| 1.0 / (u * u)).collect();
        let (z1, z2): (Vec<f64>, Vec<f64>) = if self.free_z {
            (x[m + 1..m + 1 + n].to_vec(), x[m + 1 + n..m + 1 + 2 * n].to_vec())
        } else {
            (g.as_slice()[..n].to_vec(), slope.as_slice().to_vec())
        };
        let resid: Vec<f64> = (0..n).map(|i| z1[i] + a * z2[i] * inv_u2[i]).collect();
        let ode_sq: f64 = resid.iter().map(|r| r * r).sum();
        let data_resid: Vec<f64> = if self.free_z { (0..n).map(|i| g[i] - z1[i]).collect() } else { vec![] };
        let data: f64 = data_resid.iter().map(|r| r * r).sum();
        let anchor_resid = g[self.anchor_index] - 1.0;
        let norm = beta.dot(&g);
        let prior = a * a / (self.gamma * self.gamma);
        let ode = if self.l2_squared { ode_sq } else { ode_sq.sqrt() };
        let w = self.weights;
        let terms = CgcPdeTerms::assemble(norm, prior, data, ode, anchor_resid * anchor_resid, w);

        if let Some(grad) = grad {
            grad.fill(0.0);
            // d(ode)/d(resid): 2 r for the squared form, r / ‖r‖ otherwise
            let scale = if self.l2_squared {
                2.0 * w.ode
            } else if ode_sq > 0.0 {
                w.ode / ode_sq.sqrt()
            } else {
                0.0
            };
            let mut d_g = DVector::<f64>::zeros(m);
            let mut d_slope = DVector::<f64>::zeros(n);
            if self.free_z {
                for i in 0..n {
                    d_g[i] += 2.0 * w.data * data_resid[i];
                    grad[m + 1 + i] += -2.0 * w.data * data_resid[i] + scale * resid[i];
                    grad[m + 1 + n + i] += scale * resid[i] * a * inv_u2[i];
                }
            } else {
                for i in 0..n {
                    d_g[i] += scale * resid[i];
                    d_slope[i] += scale * resid[i] * a * inv_u2[i];
                }
            }
            grad[m] = 2.0 * a / (self.gamma * self.gamma)
                + scale * (0..n).map(|i| resid[i] * z2[i] * inv_u2[i]).sum::<f64>();
            d_g[self.anchor_index] += 2.0 * w.anchor * anchor_resid;
            // norm = βᵀ(K+λI)β
            let d_beta = &self.shifted * (d_g + 2.0 * &beta) + self.dgram.transpose() * d_slope;
            grad[..m].copy_from_slice(d_beta.as_slice());
        }
        terms
    }

    fn pack(&self, state: &CgcPdeState) -> Result<Vec<f64>> {
        if state.g_values.len() != self.m() {
            return Err(Error::InvalidInput(format!(
                "state has {} node values, problem has {} nodes",
                state.g_values.len(),
                self.m()
            )));
        }
        if state.g_values.iter().any(|v| !v.is_finite()) || !state.a.is_finite() {
            return Err(Error::InvalidInput("non-finite state".into()));
        }
        let beta = self.factor.solve(&DVector::from_column_slice(&state.g_values));
        let mut x: Vec<f64> = beta.iter().copied().collect();
        x.push(state.a);
        if self.free_z {
            let (z1, z2) = match (&state.z1, &state.z2) {
                (Some(z1), Some(z2)) if z1.len() == self.n() && z2.len() == self.n() => (z1.clone(), z2.clone()),
                _ => return Err(Error::InvalidInput("free-Z state needs z1 and z2 of data length".into())),
            };
            x.extend(z1);
            x.extend(z2);
        }
        Ok(x)
    }

    fn unpack(&self, x: &[f64]) -> CgcPdeState {
        let (n, m) = (self.n(), self.m());
        let beta = DVector::from_column_slice(&x[..m]);
        let g = &self.shifted * beta;
        let (z1, z2) = if self.free_z {
            (Some(x[m + 1..m + 1 + n].to_vec()), Some(x[m + 1 + n..].to_vec()))
        } else {
            (None, None)
        };
        CgcPdeState { g_values: g.iter().copied().collect(), a: x[m], z1, z2 }
    }

    fn interpolant(&self, beta: &[f64]) -> Interpolant {
        Interpolant {
            kernel: self.kernel,
            functionals: self.nodes.iter().map(|&u| LinearFunctional::dirac(u)).collect(),
            coefficients: beta.to_vec(),
            nugget: self.nugget(),
        }
    }

    /// Inner quadratic solve at fixed `a`; returns `β` and the reduced loss.
    fn project(&self, a: f64) -> Result<(DVector<f64>, f64)> {
        let (n, m) = (self.n(), self.m());
        let w = self.weights;
        // residual matrix C with resid = C β
        let mut c = DMatrix::<f64>::zeros(n, m);
        for i in 0..n {
            let s = a / (self.u_data[i] * self.u_data[i]);
            for j in 0..m {
                c[(i, j)] = self.shifted[(i, j)] + s * self.dgram[(i, j)];
            }
        }
        let f = self.shifted.row(self.anchor_index).transpose();
        let mut h = &self.shifted + w.ode * c.transpose() * &c + w.anchor * &f * f.transpose();
        h = (&h + h.transpose()) * 0.5;
        let chol = h
            .clone()
            .cholesky()
            .ok_or(Error::Singular { condition: f64::INFINITY, nugget: self.nugget() })?;
        let beta = chol.solve(&(w.anchor * &f));
        let loss = w.anchor * (1.0 - f.dot(&beta)) + a * a / (self.gamma * self.gamma);
        Ok((beta, loss))
    }
}

/// Node values of `G` and the coefficient `a`. `z1`/`z2` are present only for
/// the free-Z formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgcPdeState {
    pub g_values: Vec<f64>,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<Vec<f64>>,
}

impl CgcPdeState {
    /// `G` sampled from `f` on the problem nodes. In free-Z mode `z1` starts
    /// at the data values of `G` and `z2` at `f′` by central differences.
    pub fn from_fn(problem: &CgcPdeProblem, f: impl Fn(f64) -> f64, a: f64) -> Self {
        let g_values: Vec<f64> = problem.nodes.iter().map(|&u| f(u)).collect();
        let (z1, z2) = if problem.free_z {
            let h = 1e-6;
            (
                Some(problem.u_data.iter().map(|&u| f(u)).collect()),
                Some(problem.u_data.iter().map(|&u| (f(u + h) - f(u - h)) / (2.0 * h)).collect()),
            )
        } else {
            (None, None)
        };
        CgcPdeState { g_values, a, z1, z2 }
    }

    /// Identity map and `a = 0`.
    pub fn identity(problem: &CgcPdeProblem) -> Self {
        CgcPdeState::from_fn(problem, |u| u, 0.0)
    }
}

/// Unweighted loss terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgcPdeTerms {
    pub norm: f64,
    pub prior: f64,
    pub data: f64,
    pub ode: f64,
    pub anchor: f64,
    pub total: f64,
}

impl CgcPdeTerms {
    fn assemble(norm: f64, prior: f64, data: f64, ode: f64, anchor: f64, w: LossWeights) -> Self {
        let total = norm + prior + w.data * data + w.ode * ode + w.anchor * anchor;
        CgcPdeTerms { norm, prior, data, ode, anchor, total }
    }
}

pub fn cgc_pde_loss(problem: &CgcPdeProblem, state: &CgcPdeState) -> Result<CgcPdeTerms> {
    let x = problem.pack(state)?;
    Ok(problem.eval_packed(&x, None))
}

/// Gradient of the total loss with respect to the state.
#[derive(Debug, Clone, PartialEq)]
pub struct CgcPdeGradient {
    pub g_values: Vec<f64>,
    pub a: f64,
    pub z1: Option<Vec<f64>>,
    pub z2: Option<Vec<f64>>,
}

pub fn cgc_pde_gradient(problem: &CgcPdeProblem, state: &CgcPdeState) -> Result<(CgcPdeTerms, CgcPdeGradient)> {
    let x = problem.pack(state)?;
    let mut g = vec![0.0; x.len()];
    let terms = problem.eval_packed(&x, Some(&mut g));
    let m = problem.m();
    let n = problem.n();
    // β = (K+λI)⁻¹ g_values, so ∂/∂g = (K+λI)⁻¹ ∂/∂β
    let d_nodes = problem.factor.solve(&DVector::from_column_slice(&g[..m]));
    let (z1, z2) = if problem.free_z {
        (Some(g[m + 1..m + 1 + n].to_vec()), Some(g[m + 1 + n..].to_vec()))
    } else {
        (None, None)
    };
    Ok((terms, CgcPdeGradient { g_values: d_nodes.iter().copied().collect(), a: g[m], z1, z2 }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgcPdeSolution {
    pub state: CgcPdeState,
    pub interpolant: Interpolant,
    pub terms: CgcPdeTerms,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

pub fn cgc_pde_solve(problem: &CgcPdeProblem, init: &CgcPdeState, config: &SolveConfig) -> Result<CgcPdeSolution> {
    let x0 = problem.pack(init)?;
    let m = problem.m();
    let (x, trace, iterations, reason) = match config.optimizer {
        CgcOptimizer::VariableProjection => {
            if problem.free_z || !problem.l2_squared {
                return Err(Error::InvalidParameters(
                    "variable projection needs the squared equation loss without free Z".into(),
                ));
            }
            // every reduced-loss evaluation is an exact minimization over β
            let mut failure: Option<Error> = None;
            let mut reduced = |a: &[f64], grad: &mut [f64]| -> f64 {
                match problem.project(a[0]) {
                    Ok((beta, value)) => {
                        let mut x: Vec<f64> = beta.iter().copied().collect();
                        x.push(a[0]);
                        let mut g = vec![0.0; x.len()];
                        problem.eval_packed(&x, Some(&mut g));
                        grad[0] = g[m];
                        value
                    }
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            };
            let outcome = gradient_descent(&mut reduced, &[init.a], &config.descent);
            if let Some(e) = failure {
                if outcome.is_err() {
                    return Err(e);
                }
            }
            let mut min = outcome?;
            // the start point is scored on the given state, not its projection
            let start = problem.eval_packed(&x0, None).total;
            min.trace.insert(0, start);
            let (beta, _) = problem.project(min.x[0])?;
            let mut x: Vec<f64> = beta.iter().copied().collect();
            x.push(min.x[0]);
            (x, min.trace, min.iterations, min.reason)
        }
        CgcOptimizer::GradientDescent => {
            let min = gradient_descent(|x, g| problem.eval_packed(x, Some(g)).total, &x0, &config.descent)?;
            unpack_min(min)
        }
        CgcOptimizer::Lbfgs => {
            let min = lbfgs(|x, g| problem.eval_packed(x, Some(g)).total, &x0, config.lbfgs_memory, &config.descent)?;
            unpack_min(min)
        }
        CgcOptimizer::NelderMead => {
            let min = nelder_mead(|x| problem.eval_packed(x, None).total, &x0, config.simplex_scale, &config.descent)?;
            unpack_min(min)
        }
    };
    let terms = problem.eval_packed(&x, None);
    if !terms.total.is_finite() {
        return Err(Error::Diverged { iterations, trace });
    }
    Ok(CgcPdeSolution {
        state: problem.unpack(&x),
        interpolant: problem.interpolant(&x[..m]),
        terms,
        trace,
        iterations,
        reason,
    })
}

fn unpack_min(min: Minimum) -> (Vec<f64>, Vec<f64>, usize, StopReason) {
    (min.x, min.trace, min.iterations, min.reason)
}

/// Degree of the homogeneous polynomial `H`.
pub const NF_DEGREE: u32 = 4;
const NF_COEFFS: usize = NF_DEGREE as usize + 1;

/// `H(u, v) = Σₖ cₖ u^{4−k} v^k`; vanishes at the origin for every `c`.
pub fn nf_h(coeffs: &[f64; NF_COEFFS], u: f64, v: f64) -> f64 {
    monomials(NF_DEGREE, [u, v]).iter().zip(coeffs).map(|(m, c)| m * c).sum()
}

/// `‖H‖²` in the RKHS of `(sᵀt)⁴`: `Σ cₖ² / C(4, k)`.
pub fn nf_h_norm_sq(coeffs: &[f64; NF_COEFFS]) -> f64 {
    coeffs.iter().enumerate().map(|(k, c)| c * c / binomial(NF_DEGREE, k as u32)).sum()
}

/// Stencil rows `(column, weight)` of the time derivative on a uniform grid:
/// central inside, second-order one-sided at the ends.
fn fd_rows(n: usize, dt: f64) -> Vec<Vec<(usize, f64)>> {
    let s = 1.0 / (2.0 * dt);
    (0..n)
        .map(|i| {
            if i == 0 {
                vec![(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
            } else if i == n - 1 {
                vec![(n - 3, s), (n - 2, -4.0 * s), (n - 1, 3.0 * s)]
            } else {
                vec![(i - 1, -s), (i + 1, s)]
            }
        })
        .collect()
}

pub fn fd_time_derivative(r: &[f64], dt: f64) -> Vec<f64> {
    fd_rows(r.len(), dt)
        .iter()
        .map(|row| row.iter().map(|&(j, w)| w * r[j]).sum())
        .collect()
}

/// Learns `H` and the normal-form radius along a Brusselator trajectory.
#[derive(Debug, Clone)]
pub struct NfProblem {
    trajectory: Trajectory,
    dt: f64,
    mu: f64,
    weights: LossWeights,
    initial: [f64; 2],
    kernel: KernelSpec,
    /// Monomials of each trajectory state, one row per sample.
    features: DMatrix<f64>,
}

impl NfProblem {
    pub fn new(trajectory: Trajectory, mu: f64, weights: LossWeights, initial: [f64; 2]) -> Result<Self> {
        weights.validate()?;
        if trajectory.dim() != 2 {
            return Err(Error::InvalidInput(format!("expected a planar trajectory, got dimension {}", trajectory.dim())));
        }
        if trajectory.len() < 3 {
            return Err(Error::InvalidInput("need at least 3 samples".into()));
        }
        let dt = trajectory
            .uniform_step(1e-9)
            .ok_or_else(|| Error::InvalidInput("trajectory times are not uniformly spaced".into()))?;
        if !mu.is_finite() || initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite normal-form parameters".into()));
        }
        let n = trajectory.len();
        let mut features = DMatrix::zeros(n, NF_COEFFS);
        for (i, s) in trajectory.states.iter().enumerate() {
            for (k, m) in monomials(NF_DEGREE, [s[0], s[1]]).into_iter().enumerate() {
                features[(i, k)] = m;
            }
        }
        let kernel = KernelSpec::poly(NF_DEGREE, 2)?;
        Ok(NfProblem { trajectory, dt, mu, weights, initial, kernel, features })
    }

    /// `data = 1/λ`, equation and anchor at `10⁸`.
    pub fn default_weights(nugget: f64) -> LossWeights {
        LossWeights { data: 1.0 / nugget, ode: 1e8, anchor: 1e8 }
    }

    /// Weights that make each penalty match `‖H‖²` at `state` (`data = 1/λ`).
    pub fn balanced_weights(&self, state: &NfState, nugget: f64) -> Result<LossWeights> {
        let t = nf_loss(self, state)?;
        let scale = if t.norm > 0.0 { t.norm } else { 1.0 };
        Ok(LossWeights { data: 1.0 / nugget, ode: balancing_weight(scale, t.ode), anchor: balancing_weight(scale, t.boundary) })
    }

    pub fn with_weights(&self, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        Ok(NfProblem { weights, ..self.clone() })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn initial(&self) -> [f64; 2] {
        self.initial
    }

    fn initial_radius(&self) -> f64 {
        self.initial[0].hypot(self.initial[1])
    }

    fn initial_features(&self) -> Vec<f64> {
        monomials(NF_DEGREE, self.initial)
    }

    fn check(&self, state: &NfState) -> Result<()> {
        if state.r_values.len() != self.trajectory.len() {
            return Err(Error::InvalidInput(format!(
                "{} radius values for {} samples",
                state.r_values.len(),
                self.trajectory.len()
            )));
        }
        if state.r_values.iter().chain(&state.h_coeffs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite state".into()));
        }
        Ok(())
    }

    fn eval(&self, c: &[f64], r: &[f64], grad: Option<&mut [f64]>) -> NfTerms {
        let n = r.len();
        let w = self.weights;
        let coeffs: [f64; NF_COEFFS] = c.try_into().expect("five coefficients");
        let hvals = &self.features * DVector::from_column_slice(c);
        let data_resid: Vec<f64> = (0..n).map(|i| hvals[i] - r[i]).collect();
        let dr = fd_time_derivative(r, self.dt);
        let ode_resid: Vec<f64> = (0..n).map(|i| dr[i] - (self.mu - r[i] * r[i]) * r[i]).collect();
        let f0 = self.initial_features();
        let bnd = f0.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() - self.initial_radius();
        let terms = NfTerms::assemble(
            nf_h_norm_sq(&coeffs),
            data_resid.iter().map(|x| x * x).sum(),
            ode_resid.iter().map(|x| x * x).sum(),
            bnd * bnd,
            w,
        );
        if let Some(grad) = grad {
            grad.fill(0.0);
            for k in 0..NF_COEFFS {
                grad[k] = 2.0 * c[k] / binomial(NF_DEGREE, k as u32) + 2.0 * w.anchor * bnd * f0[k];
                for i in 0..n {
                    grad[k] += 2.0 * w.data * data_resid[i] * self.features[(i, k)];
                }
            }
            let gr = &mut grad[NF_COEFFS..];
            for i in 0..n {
                gr[i] -= 2.0 * w.data * data_resid[i];
            }
            for (i, row) in fd_rows(n, self.dt).iter().enumerate() {
                let q = 2.0 * w.ode * ode_resid[i];
                for &(j, wt) in row {
                    gr[j] += q * wt;
                }
                gr[i] += q * (3.0 * r[i] * r[i] - self.mu);
            }
        }
        terms
    }

    /// One Levenberg step system: returns the gradient `Jᵀres` and the step
    /// solving `(JᵀJ + ηI) δ = −Jᵀres`.
    fn lm_step(&self, c: &[f64], r: &[f64], damping: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = r.len();
        let w = self.weights;
        let hvals = &self.features * DVector::from_column_slice(c);
        let dr = fd_time_derivative(r, self.dt);
        let f0 = self.initial_features();
        let bnd = f0.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() - self.initial_radius();
        let rows = fd_rows(n, self.dt);

        // gradient blocks
        let mut gc = vec![0.0; NF_COEFFS];
        let mut gr = vec![0.0; n];
        let mut acc = DMatrix::<f64>::zeros(NF_COEFFS, NF_COEFFS);
        for k in 0..NF_COEFFS {
            let b = binomial(NF_DEGREE, k as u32);
            gc[k] = c[k] / b + w.anchor * bnd * f0[k];
            acc[(k, k)] += 1.0 / b + damping;
            for l in 0..NF_COEFFS {
                acc[(k, l)] += w.anchor * f0[k] * f0[l];
            }
        }
        for i in 0..n {
            let e = hvals[i] - r[i];
            for k in 0..NF_COEFFS {
                gc[k] += w.data * e * self.features[(i, k)];
            }
            gr[i] -= w.data * e;
        }
        acc += w.data * self.features.transpose() * &self.features;
        let mut arr = BandedSpd::zeros(n, 2);
        arr.add_diagonal(w.data + damping);
        for (i, row) in rows.iter().enumerate() {
            let q = dr[i] - (self.mu - r[i] * r[i]) * r[i];
            let mut entries: Vec<(usize, f64)> = row.clone();
            let diag = 3.0 * r[i] * r[i] - self.mu;
            match entries.iter_mut().find(|(j, _)| *j == i) {
                Some(e) => e.1 += diag,
                None => entries.push((i, diag)),
            }
            for (a, &(ja, wa)) in entries.iter().enumerate() {
                gr[ja] += w.ode * q * wa;
                for &(jb, wb) in &entries[a..] {
                    arr.add(ja, jb, w.ode * wa * wb)?;
                }
            }
        }
        // Schur complement on the coefficient block; A_cr[k, i] = −λ₁ F[i, k]
        let chol = arr.cholesky()?;
        let arr_inv_gr = chol.solve(&gr);
        let mut arr_inv_arc = Vec::with_capacity(NF_COEFFS);
        for k in 0..NF_COEFFS {
            let col: Vec<f64> = (0..n).map(|i| -w.data * self.features[(i, k)]).collect();
            arr_inv_arc.push(chol.solve(&col));
        }
        let mut schur = acc;
        let mut rhs = DVector::from_iterator(NF_COEFFS, gc.iter().map(|g| -g));
        for k in 0..NF_COEFFS {
            for l in 0..NF_COEFFS {
                let s: f64 = (0..n).map(|i| -w.data * self.features[(i, k)] * arr_inv_arc[l][i]).sum();
                schur[(k, l)] -= s;
            }
            rhs[k] += (0..n).map(|i| -w.data * self.features[(i, k)] * arr_inv_gr[i]).sum::<f64>();
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        let dc = schur
            .cholesky()
            .ok_or(Error::Singular { condition: f64::INFINITY, nugget: damping })?
            .solve(&rhs);
        let mut step: Vec<f64> = dc.iter().copied().collect();
        for i in 0..n {
            let mut v = -arr_inv_gr[i];
            for k in 0..NF_COEFFS {
                v -= arr_inv_arc[k][i] * dc[k];
            }
            step.push(v);
        }
        let mut grad = gc;
        grad.extend(gr);
        Ok((grad, step))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfState {
    pub h_coeffs: [f64; NF_COEFFS],
    pub r_values: Vec<f64>,
}

impl NfState {
    /// `r = ‖(u, v)‖` along the trajectory and `H` its least-squares fit.
    pub fn initial(problem: &NfProblem) -> Result<Self> {
        let r: Vec<f64> = problem.trajectory.states.iter().map(|s| s[0].hypot(s[1])).collect();
        let h_coeffs = least_squares_coeffs(&problem.features, &r)?;
        Ok(NfState { h_coeffs, r_values: r })
    }
}

/// Coefficients `c` minimizing `‖F c − r‖²`.
pub fn least_squares_coeffs(features: &DMatrix<f64>, r: &[f64]) -> Result<[f64; NF_COEFFS]> {
    let svd = SVD::new(features.clone(), true, true);
    let c = svd
        .solve(&DVector::from_column_slice(r), 1e-14)
        .map_err(|e| Error::InvalidInput(format!("least-squares fit failed: {e}")))?;
    let mut out = [0.0; NF_COEFFS];
    out.copy_from_slice(c.as_slice());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfTerms {
    pub norm: f64,
    pub data: f64,
    pub ode: f64,
    pub boundary: f64,
    pub total: f64,
}

impl NfTerms {
    fn assemble(norm: f64, data: f64, ode: f64, boundary: f64, w: LossWeights) -> Self {
        NfTerms { norm, data, ode, boundary, total: norm + w.data * data + w.ode * ode + w.anchor * boundary }
    }
}

pub fn nf_loss(problem: &NfProblem, state: &NfState) -> Result<NfTerms> {
    problem.check(state)?;
    Ok(problem.eval(&state.h_coeffs, &state.r_values, None))
}

/// Total loss and its gradient, coefficients first then radius values.
pub fn nf_gradient(problem: &NfProblem, state: &NfState) -> Result<(NfTerms, Vec<f64>)> {
    problem.check(state)?;
    let mut g = vec![0.0; NF_COEFFS + state.r_values.len()];
    let t = problem.eval(&state.h_coeffs, &state.r_values, Some(&mut g));
    Ok((t, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NfOptimizer {
    #[default]
    LevenbergMarquardt,
    GradientDescent,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NfSolveConfig {
    pub optimizer: NfOptimizer,
    pub descent: DescentConfig,
    pub lbfgs_memory: usize,
    /// Angle at `t = 0` used for the Cartesian reconstruction.
    pub theta0: f64,
}

impl Default for NfSolveConfig {
    fn default() -> Self {
        NfSolveConfig {
            optimizer: NfOptimizer::default(),
            descent: DescentConfig { max_iters: 10_000, rel_tol: 1e-13, ..DescentConfig::default() },
            lbfgs_memory: 10,
            theta0: -FRAC_PI_4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfSolution {
    pub state: NfState,
    pub terms: NfTerms,
    /// `(x, y) = r (cos θ, sin θ)` with `θ = t + θ₀`.
    pub reconstruction: Trajectory,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

pub fn nf_solve(problem: &NfProblem, init: &NfState, config: &NfSolveConfig) -> Result<NfSolution> {
    problem.check(init)?;
    let mut x: Vec<f64> = init.h_coeffs.iter().chain(&init.r_values).copied().collect();
    let objective = |x: &[f64], g: &mut [f64]| problem.eval(&x[..NF_COEFFS], &x[NF_COEFFS..], Some(g)).total;
    let (trace, iterations, reason) = match config.optimizer {
        NfOptimizer::LevenbergMarquardt => {
            let (trace, it, reason) = levenberg_marquardt(problem, &mut x, &config.descent)?;
            (trace, it, reason)
        }
        NfOptimizer::GradientDescent => {
            let m = gradient_descent(objective, &x, &config.descent)?;
            x = m.x;
            (m.trace, m.iterations, m.reason)
        }
        NfOptimizer::Lbfgs => {
            let m = lbfgs(objective, &x, config.lbfgs_memory, &config.descent)?;
            x = m.x;
            (m.trace, m.iterations, m.reason)
        }
    };
    let mut h_coeffs = [0.0; NF_COEFFS];
    h_coeffs.copy_from_slice(&x[..NF_COEFFS]);
    let state = NfState { h_coeffs, r_values: x[NF_COEFFS..].to_vec() };
    let terms = nf_loss(problem, &state)?;
    let reconstruction = reconstruct(&problem.trajectory.times, &state.r_values, config.theta0)?;
    Ok(NfSolution { state, terms, reconstruction, trace, iterations, reason })
}

/// `(x, y)(t) = r(t) (cos(t + θ₀), sin(t + θ₀))`.
pub fn reconstruct(times: &[f64], r: &[f64], theta0: f64) -> Result<Trajectory> {
    let states = times
        .iter()
        .zip(r)
        .map(|(&t, &r)| {
            let th = t + theta0;
            vec![r * th.cos(), r * th.sin()]
        })
        .collect();
    Trajectory::new(times.to_vec(), states)
}

fn levenberg_marquardt(problem: &NfProblem, x: &mut Vec<f64>, cfg: &DescentConfig) -> Result<(Vec<f64>, usize, StopReason)> {
    let eval = |x: &[f64]| problem.eval(&x[..NF_COEFFS], &x[NF_COEFFS..], None).total;
    let mut cost = eval(x);
    let mut trace = vec![cost];
    if !cost.is_finite() {
        return Err(Error::Diverged { iterations: 0, trace });
    }
    let mut damping = 1e-3;
    let mut grow = 2.0;
    for it in 0..cfg.max_iters {
        let (grad, step) = match problem.lm_step(&x[..NF_COEFFS], &x[NF_COEFFS..], damping) {
            Ok(v) => v,
            Err(_) if damping < 1e20 => {
                damping *= grow;
                grow *= 2.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        // Jᵀres is half the loss gradient
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(2.0 * g.abs()));
        if gnorm <= cfg.grad_tol * cost.max(1.0) {
            return Ok((trace, it, StopReason::Gradient));
        }
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let new_cost = eval(&trial);
        if new_cost.is_finite() && new_cost < cost {
            let decrease = cost - new_cost;
            *x = trial;
            cost = new_cost;
            trace.push(cost);
            damping = (damping / 3.0).max(1e-15);
            grow = 2.0;
            if decrease <= cfg.rel_tol * cost {
                return Ok((trace, it + 1, StopReason::Stalled));
            }
        } else {
            damping *= grow;
            grow *= 2.0;
            if damping > 1e20 {
                return Ok((trace, it + 1, StopReason::LineSearchFailed));
            }
        }
    }
    Ok((trace, cfg.max_iters, StopReason::MaxIterations))
}
