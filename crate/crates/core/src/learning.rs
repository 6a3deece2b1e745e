//! Lengthscale selection by leave-one-out and subsample losses.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::regression::{assemble_gram, ConstraintSystem, FactoredGram, LinearFunctional, Nugget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSearchConfig {
    grid: Vec<f64>,
    refine_iters: usize,
    /// Overrides the nugget of the system being scored.
    nugget: Option<f64>,
}

impl ThetaSearchConfig {
    pub fn new(grid: Vec<f64>, refine_iters: usize, nugget: Option<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameters("theta grid is empty".into()));
        }
        if grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameters("theta grid must be positive and finite".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameters("theta grid must be strictly increasing".into()));
        }
        if let Some(l) = nugget {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameters(format!("nugget must be positive, got {l}")));
            }
        }
        Ok(ThetaSearchConfig { grid, refine_iters, nugget })
    }

    /// `n` log-spaced points from `lo` to `hi` inclusive.
    pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo > 0.0 && hi > lo) || n == 0 {
            return Err(Error::InvalidParameters(format!("bad log grid [{lo}, {hi}] x {n}")));
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn refine_iters(&self) -> usize {
        self.refine_iters
    }

    pub fn nugget(&self) -> Option<f64> {
        self.nugget
    }
}

impl Default for ThetaSearchConfig {
    /// 31 log-spaced points on `[0.1, 100]` with 20 refinement steps.
    fn default() -> Self {
        ThetaSearchConfig {
            grid: ThetaSearchConfig::log_grid(0.1, 100.0, 31).expect("static grid"),
            refine_iters: 20,
            nugget: None,
        }
    }
}

fn interior_count(system: &ConstraintSystem) -> Result<usize> {
    let n = system.interior().len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("leave-one-out needs at least 2 interior constraints, got {n}")));
    }
    Ok(n)
}

fn full_factor(system: &ConstraintSystem, kernel: &KernelSpec) -> Result<(FactoredGram, DVector<f64>, f64)> {
    kernel.validate()?;
    let gram = assemble_gram(system.functionals(), kernel)?;
    let factor = FactoredGram::new(&gram, system.nugget().resolve(&gram))?;
    let y = DVector::from_column_slice(system.targets());
    let q = factor.quad_form(&y);
    if !(q > 0.0) {
        return Err(Error::InvalidInput("targets have zero norm; the loss is undefined".into()));
    }
    Ok((factor, y, q))
}

/// Mean relative drop of `Yᵀ(K+λI)⁻¹Y` when one interior constraint is
/// removed, using rank-one downdates of the full inverse.
///
/// The nugget is resolved once on the full Gram matrix and reused for every
/// reduced system.
pub fn rho_loo(system: &ConstraintSystem, kernel: &KernelSpec) -> Result<f64> {
    let n = interior_count(system)?;
    let (factor, y, q) = full_factor(system, kernel)?;
    let beta = factor.solve(&y);
    let inv = factor.inverse();
    let mut acc = 0.0;
    for j in system.interior() {
        let reduced = q - beta[j] * beta[j] / inv[(j, j)];
        acc += 1.0 - reduced / q;
    }
    Ok((acc / n as f64).clamp(0.0, 1.0))
}

/// Same loss as [`rho_loo`], refactoring every reduced system from scratch.
pub fn rho_loo_naive(system: &ConstraintSystem, kernel: &KernelSpec) -> Result<f64> {
    let n = interior_count(system)?;
    let (factor, _, q) = full_factor(system, kernel)?;
    let nugget = factor.nugget();
    let mut acc = 0.0;
    for j in system.interior() {
        let keep: Vec<usize> = (0..system.len()).filter(|&k| k != j).collect();
        let sub = system.select(&keep)?;
        let gram = assemble_gram(sub.functionals(), kernel)?;
        let f = FactoredGram::new(&gram, nugget)?;
        let reduced = f.quad_form(&DVector::from_column_slice(sub.targets()));
        acc += 1.0 - reduced / q;
    }
    Ok((acc / n as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSearch {
    pub theta: f64,
    pub rho: f64,
    /// `ρ` at every grid point, in grid order.
    pub grid_rho: Vec<f64>,
}

/// Minimizes `ρ(θ)` over the configured grid, then refines with golden-section
/// search in `log θ` inside the bracket around the best grid point.
///
/// `family` maps a lengthscale to the kernel being scored.
pub fn learn_theta<F>(config: &ThetaSearchConfig, system: &ConstraintSystem, family: F) -> Result<ThetaSearch>
where
    F: Fn(f64) -> Result<KernelSpec> + Sync,
{
    let system = match config.nugget {
        Some(l) => system.clone().with_nugget(Nugget::Fixed(l))?,
        None => system.clone(),
    };
    let score = |theta: f64| -> Result<f64> { rho_loo(&system, &family(theta)?) };
    let grid_rho: Vec<f64> = config.grid.par_iter().map(|&t| score(t)).collect::<Result<_>>()?;
    let mut best_k = 0;
    for (k, r) in grid_rho.iter().enumerate() {
        if *r < grid_rho[best_k] {
            best_k = k;
        }
    }
    let mut best = (config.grid[best_k], grid_rho[best_k]);
    if config.grid.len() > 1 && config.refine_iters > 0 {
        let lo = config.grid[best_k.saturating_sub(1)].ln();
        let hi = config.grid[(best_k + 1).min(config.grid.len() - 1)].ln();
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = score(c.exp())?;
        let mut fd = score(d.exp())?;
        for (t, r) in [(c, fc), (d, fd)] {
            if r < best.1 {
                best = (t.exp(), r);
            }
        }
        for _ in 0..config.refine_iters {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = score(c.exp())?;
                if fc < best.1 {
                    best = (c.exp(), fc);
                }
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = score(d.exp())?;
                if fd < best.1 {
                    best = (d.exp(), fd);
                }
            }
        }
    }
    Ok(ThetaSearch { theta: best.0, rho: best.1, grid_rho })
}

/// Subsample loss `1 − (Y₂ᵀK₂⁻¹Y₂)/(Y₁ᵀK₁⁻¹Y₁)` for point data, where `s2`
/// indexes a subset of the points indexed by `s1`. The nugget is resolved on
/// the `s1` Gram matrix and used for both solves.
pub fn rho_kf(kernel: &KernelSpec, x: &[f64], y: &[f64], s1: &[usize], s2: &[usize], nugget: Nugget) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} inputs but {} outputs", x.len(), y.len())));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InvalidInput("subsamples must be nonempty".into()));
    }
    if let Some(&bad) = s1.iter().chain(s2).find(|&&i| i >= x.len()) {
        return Err(Error::InvalidInput(format!("index {bad} out of range")));
    }
    if let Some(&bad) = s2.iter().find(|i| !s1.contains(i)) {
        return Err(Error::InvalidInput(format!("index {bad} of the subsample is not in the sample")));
    }
    let block = |s: &[usize]| -> Result<(nalgebra::DMatrix<f64>, DVector<f64>)> {
        let fs: Vec<LinearFunctional> = s.iter().map(|&i| LinearFunctional::dirac(x[i])).collect();
        Ok((assemble_gram(&fs, kernel)?, DVector::from_iterator(s.len(), s.iter().map(|&i| y[i]))))
    };
    let (g1, y1) = block(s1)?;
    let lambda = nugget.resolve(&g1);
    let q1 = FactoredGram::new(&g1, lambda)?.quad_form(&y1);
    if !(q1 > 0.0) {
        return Err(Error::InvalidInput("sample targets have zero norm; the loss is undefined".into()));
    }
    let (g2, y2) = block(s2)?;
    let q2 = FactoredGram::new(&g2, lambda)?.quad_form(&y2);
    Ok(1.0 - q2 / q1)
}
