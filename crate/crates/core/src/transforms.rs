//! Constraint systems for learning transformations between PDEs, together
//! with their closed-form targets and the error metrics used to score fits.

use serde::{Deserialize, Serialize};

use crate::dynamics::{antiderivative, diff, ic, pde_step, Field1D, PdeKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::regression::{rkhs_norm_sq, ConstraintSystem, FunctionalTerm, Interpolant, LinearFunctional, Nugget};

/// Map from the Burgers antiderivative `u` to the heat-equation state `w`,
/// normalized so that `w(0) = 1` and `w(1) = 0`.
pub fn cole_hopf_truth(u: f64, nu: f64) -> f64 {
    let k = 1.0 / (2.0 * nu);
    // (e^{-ku} - e^{-k}) / (1 - e^{-k}), arranged to avoid cancellation
    -((-k * (u - 1.0)).exp_m1() * (-k).exp()) / (-k).exp_m1()
}

/// `e^{(u³−1)/3}`, the map that linearizes `u_t = u_x − 1/u²`.
pub fn first_order_truth(u: f64) -> f64 {
    ((u * u * u - 1.0) / 3.0).exp()
}

/// Which second-order ODE the interior Cole-Hopf functionals encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeForm {
    /// `ν D″ + ½ D′ = 0`, the equation solved by [`cole_hopf_truth`].
    #[default]
    Appendix,
    /// `½ D″ + ν D′ = 0`; agrees with the above only at `ν = ½`.
    MainText,
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("viscosity must be positive, got {nu}")))
    }
}

/// Wraps interior functionals as `[δ₀ | interior | δ₁]` with targets `(1, 0, …, 0)`.
fn with_boundary(interior: Vec<LinearFunctional>, nugget: Nugget) -> Result<ConstraintSystem> {
    let n = interior.len();
    let mut fs = Vec::with_capacity(n + 2);
    fs.push(LinearFunctional::dirac(0.0));
    fs.extend(interior);
    fs.push(LinearFunctional::dirac(1.0));
    let mut y = vec![0.0; n + 2];
    y[0] = 1.0;
    ConstraintSystem::new(fs, y, nugget)?.with_interior(1..n + 1)
}

fn ode_functional(u: f64, nu: f64, form: OdeForm) -> Result<LinearFunctional> {
    let (second, first) = match form {
        OdeForm::Appendix => (nu, 0.5),
        OdeForm::MainText => (0.5, nu),
    };
    LinearFunctional::new(vec![FunctionalTerm::new(u, 2, second), FunctionalTerm::new(u, 1, first)])
}

pub fn build_cole_hopf_ode(u_samples: &[f64], nu: f64, form: OdeForm) -> Result<ConstraintSystem> {
    check_nu(nu)?;
    if u_samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let interior = u_samples.iter().map(|&u| ode_functional(u, nu, form)).collect::<Result<Vec<_>>>()?;
    with_boundary(interior, Nugget::Auto)
}

/// Solver-based Cole-Hopf constraints from one Euler step of size `h`.
///
/// With `u₀ = P v₀` and `u₁ = P(Burgers step of v₀)`, interior functional `i`
/// is the heat step of `x ↦ D(u₀(x))` at `xᵢ` minus `D(u₁(xᵢ))`, expanded into
/// point evaluations of `D`. The antiderivative `P` is anchored to 0 at the
/// left end of the grid.
pub fn build_cole_hopf_discrete(v0: &Field1D, nu: f64, h: f64) -> Result<ConstraintSystem> {
    check_nu(nu)?;
    let n = v0.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!("need a grid of at least 5 points, got {n}")));
    }
    let x0 = v0.grid.x0;
    let u0 = antiderivative(v0, 0.0, x0)?;
    let step = pde_step(PdeKind::Burgers { nu }, v0, h)?;
    // the potential's anchor value follows u_t = ν u_xx − u_x²/2 as well
    let slope0 = diff(v0, 1)?.values[0];
    let anchor_drift = h * (nu * slope0 - 0.5 * v0.values[0] * v0.values[0]);
    let u1 = antiderivative(&step.field, anchor_drift, x0)?;
    let c = h * nu / (v0.grid.dx * v0.grid.dx);
    let mut interior = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        interior.push(LinearFunctional::new(vec![
            FunctionalTerm::new(u0.values[i - 1], 0, c),
            FunctionalTerm::new(u0.values[i], 0, 1.0 - 2.0 * c),
            FunctionalTerm::new(u0.values[i + 1], 0, c),
            FunctionalTerm::new(u1.values[i], 0, -1.0),
        ])?);
    }
    with_boundary(interior, Nugget::Auto)
}

/// `points_per_ic` samples from each named initial condition, pooled under
/// one pair of boundary constraints.
pub fn build_cole_hopf_multi(ic_names: &[&str], points_per_ic: usize, nu: f64, form: OdeForm) -> Result<ConstraintSystem> {
    let us = multi_samples(ic_names, points_per_ic, nu)?;
    build_cole_hopf_ode(&us, nu, form)
}

/// The pooled `u` samples used by [`build_cole_hopf_multi`].
pub fn multi_samples(ic_names: &[&str], points_per_ic: usize, nu: f64) -> Result<Vec<f64>> {
    if ic_names.is_empty() || points_per_ic == 0 {
        return Err(Error::InvalidInput("need at least one initial condition and one point".into()));
    }
    let mut us = Vec::with_capacity(ic_names.len() * points_per_ic);
    for name in ic_names {
        let ic = ic::lookup(name)?;
        if ic.antiderivative.is_none() {
            return Err(Error::InvalidInput(format!("initial condition '{name}' has no registered antiderivative")));
        }
        us.extend(ic.sample(points_per_ic, nu)?.1);
    }
    Ok(us)
}

/// `[δ₁ | (1/uᵢ²) δ′ᵤᵢ − δᵤᵢ]` with targets `(1, 0, …, 0)`.
pub fn build_first_order(u_samples: &[f64]) -> Result<ConstraintSystem> {
    if u_samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if u_samples.contains(&0.0) {
        return Err(Error::Singularity("sample at u = 0 makes 1/u² unbounded".into()));
    }
    let mut fs = vec![LinearFunctional::dirac(1.0)];
    for &u in u_samples {
        fs.push(LinearFunctional::new(vec![
            FunctionalTerm::new(u, 1, 1.0 / (u * u)),
            FunctionalTerm::new(u, 0, -1.0),
        ])?);
    }
    let mut y = vec![0.0; fs.len()];
    y[0] = 1.0;
    let n = u_samples.len();
    ConstraintSystem::new(fs, y, Nugget::Auto)?.with_interior(1..n + 1)
}

/// Closed-form target map of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    ColeHopf { nu: f64 },
    FirstOrder,
}

impl Truth {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Truth::ColeHopf { nu } => cole_hopf_truth(u, nu),
            Truth::FirstOrder => first_order_truth(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformProblem {
    pub name: String,
    pub system: ConstraintSystem,
    pub truth: Option<Truth>,
    pub eval_points: Vec<f64>,
}

impl TransformProblem {
    pub fn new(name: impl Into<String>, system: ConstraintSystem, truth: Option<Truth>, eval_points: Vec<f64>) -> Result<Self> {
        if truth.is_some() && eval_points.is_empty() {
            return Err(Error::InvalidInput("a problem with a truth map needs evaluation points".into()));
        }
        Ok(TransformProblem { name: name.into(), system, truth, eval_points })
    }

    /// Relative L² error of `learned` against the truth over the evaluation points.
    pub fn relative_l2(&self, learned: &Interpolant) -> Result<Option<f64>> {
        match self.truth {
            None => Ok(None),
            Some(t) => relative_l2(learned, |u| t.eval(u), &self.eval_points).map(Some),
        }
    }
}

/// Default size of [`anchor_interval`].
pub const ANCHOR_INTERVAL_POINTS: usize = 1001;

/// `points` evenly spaced values on `[0, 1]`, the stretch of `u` between the
/// two uniqueness constraints of the Cole-Hopf systems.
pub fn anchor_interval(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 evaluation points, got {points}")));
    }
    Ok((0..points).map(|i| i as f64 / (points - 1) as f64).collect())
}

/// `‖D − D†‖₂ / ‖D†‖₂` over the given points.
pub fn relative_l2(learned: &Interpolant, truth: impl Fn(f64) -> f64, eval_points: &[f64]) -> Result<f64> {
    let values = learned.evaluate_many(eval_points, 0)?;
    relative_l2_values(&values, &eval_points.iter().map(|&u| truth(u)).collect::<Vec<_>>())
}

pub fn relative_l2_values(learned: &[f64], truth: &[f64]) -> Result<f64> {
    if learned.is_empty() || learned.len() != truth.len() {
        return Err(Error::InvalidInput(format!("cannot compare {} values with {}", learned.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(den > 0.0) {
        return Err(Error::InvalidInput("truth vanishes on every evaluation point".into()));
    }
    let num: f64 = learned.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub n: usize,
    pub norm: f64,
}

/// Replaces the interior targets with `+1, −1, +1, …`. No smooth map meets
/// such targets once the samples get dense, so its norm must blow up.
pub fn alternating_interior(system: ConstraintSystem) -> Result<ConstraintSystem> {
    let mut y = system.targets().to_vec();
    for (k, i) in system.interior().enumerate() {
        y[i] = if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    system.with_targets(y)
}

/// `√(Yᵀ(K+λI)⁻¹Y)` of the systems produced by `builder` for each sample count.
pub fn norm_growth_diagnostic<B>(builder: B, sample_counts: &[usize], kernel: &KernelSpec, nugget: Option<f64>) -> Result<Vec<NormSample>>
where
    B: Fn(usize) -> Result<ConstraintSystem>,
{
    if sample_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sample counts must be strictly increasing".into()));
    }
    sample_counts
        .iter()
        .map(|&n| {
            let mut sys = builder(n)?;
            if let Some(l) = nugget {
                sys = sys.with_nugget(Nugget::Fixed(l))?;
            }
            Ok(NormSample { n, norm: rkhs_norm_sq(&sys, kernel)?.sqrt() })
        })
        .collect()
}

/// Ratio of the last to the first norm in a diagnostic run.
pub fn growth_ratio(samples: &[NormSample]) -> Option<f64> {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) if a.norm > 0.0 => Some(b.norm / a.norm),
        _ => None,
    }
}
