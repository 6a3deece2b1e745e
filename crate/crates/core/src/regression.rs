//! Regression under linear-functional constraints.
//!
//! A constraint is a finite weighted sum of point evaluations of the unknown
//! map or its first/second derivative. Given `M` such functionals `φ̃ᵢ` and
//! targets `Y`, the relaxed minimum-norm solution is
//!
//! ```text
//! D(u) = Σᵢ αᵢ φ̃ᵢ[K(u, ·)],    (K(φ̃, φ̃) + λI) α = Y
//! ```
//!
//! The Gram matrix is assembled from closed-form kernel derivatives and
//! factored by Cholesky. Failed factorizations escalate the nugget.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MAX_DERIV_ORDER};

/// Relative scale of the automatic nugget: `λ = NUGGET_SCALE · tr(G) / M`.
pub const NUGGET_SCALE: f64 = 1e-8;
/// How many times the nugget is multiplied by 10 before giving up.
pub const JITTER_ESCALATIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTerm {
    pub location: f64,
    pub deriv_order: u8,
    pub weight: f64,
}

impl FunctionalTerm {
    pub fn new(location: f64, deriv_order: u8, weight: f64) -> Self {
        FunctionalTerm { location, deriv_order, weight }
    }
}

/// `f ↦ Σₖ wₖ f^(aₖ)(uₖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FunctionalTerm>", into = "Vec<FunctionalTerm>")]
pub struct LinearFunctional {
    terms: Vec<FunctionalTerm>,
}

impl LinearFunctional {
    pub fn new(terms: Vec<FunctionalTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidInput("a functional needs at least one term".into()));
        }
        for t in &terms {
            if !t.weight.is_finite() || !t.location.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite functional term {t:?}")));
            }
            if t.deriv_order > MAX_DERIV_ORDER {
                return Err(Error::InvalidInput(format!(
                    "derivative order {} exceeds {MAX_DERIV_ORDER}",
                    t.deriv_order
                )));
            }
        }
        Ok(LinearFunctional { terms })
    }

    /// Point evaluation `δ_u`.
    pub fn dirac(location: f64) -> Self {
        LinearFunctional { terms: vec![FunctionalTerm::new(location, 0, 1.0)] }
    }

    pub fn terms(&self) -> &[FunctionalTerm] {
        &self.terms
    }

    /// Applies the functional to a map given as `f(u, order)`.
    pub fn apply<F: Fn(f64, u8) -> f64>(&self, f: F) -> f64 {
        self.terms.iter().map(|t| t.weight * f(t.location, t.deriv_order)).sum()
    }

    pub fn is_dirac_at(&self, u: f64) -> bool {
        self.terms.len() == 1 && self.terms[0].deriv_order == 0 && self.terms[0].location == u
    }
}

impl TryFrom<Vec<FunctionalTerm>> for LinearFunctional {
    type Error = Error;
    fn try_from(terms: Vec<FunctionalTerm>) -> Result<Self> {
        LinearFunctional::new(terms)
    }
}

impl From<LinearFunctional> for Vec<FunctionalTerm> {
    fn from(f: LinearFunctional) -> Self {
        f.terms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Nugget {
    /// `NUGGET_SCALE · tr(G) / M`, recomputed for each Gram matrix.
    #[default]
    Auto,
    Fixed(f64),
}


impl Nugget {
    pub fn resolve(&self, gram: &DMatrix<f64>) -> f64 {
        match *self {
            Nugget::Fixed(l) => l,
            Nugget::Auto => {
                let m = gram.nrows().max(1) as f64;
                let tr = gram.trace();
                if tr > 0.0 && tr.is_finite() {
                    NUGGET_SCALE * tr / m
                } else {
                    NUGGET_SCALE
                }
            }
        }
    }
}

/// Ordered functionals, their targets and the nugget of one regression problem.
///
/// `interior` marks the slots holding the per-sample functionals; the slots
/// outside it are the uniqueness/boundary constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    functionals: Vec<LinearFunctional>,
    targets: Vec<f64>,
    nugget: Nugget,
    interior: Range<usize>,
}

impl ConstraintSystem {
    pub fn new(functionals: Vec<LinearFunctional>, targets: Vec<f64>, nugget: Nugget) -> Result<Self> {
        let m = functionals.len();
        let sys = ConstraintSystem { functionals, targets, nugget, interior: 0..m };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        if self.functionals.len() != self.targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} functionals but {} targets",
                self.functionals.len(),
                self.targets.len()
            )));
        }
        if let Nugget::Fixed(l) = self.nugget {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameters(format!("nugget must be positive, got {l}")));
            }
        }
        if self.targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("non-finite target".into()));
        }
        if self.interior.end > self.functionals.len() || self.interior.start > self.interior.end {
            return Err(Error::InvalidInput(format!("interior range {:?} out of bounds", self.interior)));
        }
        Ok(())
    }

    pub fn with_interior(mut self, interior: Range<usize>) -> Result<Self> {
        self.interior = interior;
        self.validate()?;
        Ok(self)
    }

    pub fn with_nugget(mut self, nugget: Nugget) -> Result<Self> {
        self.nugget = nugget;
        self.validate()?;
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        self.targets = targets;
        self.validate()?;
        Ok(self)
    }

    /// Appends a constraint at the end (outside the interior range).
    pub fn push(&mut self, functional: LinearFunctional, target: f64) {
        self.functionals.push(functional);
        self.targets.push(target);
    }

    /// Keeps only the listed slots, in order. The interior range is reset to
    /// cover every kept slot that was interior before, which must be contiguous.
    pub fn select(&self, slots: &[usize]) -> Result<Self> {
        let mut functionals = Vec::with_capacity(slots.len());
        let mut targets = Vec::with_capacity(slots.len());
        let mut interior: Option<Range<usize>> = None;
        for (new, &old) in slots.iter().enumerate() {
            let f = self
                .functionals
                .get(old)
                .ok_or_else(|| Error::InvalidInput(format!("slot {old} out of range")))?;
            functionals.push(f.clone());
            targets.push(self.targets[old]);
            if self.interior.contains(&old) {
                interior = Some(match interior {
                    None => new..new + 1,
                    Some(r) => r.start..new + 1,
                });
            }
        }
        let interior = interior.unwrap_or(0..0);
        ConstraintSystem { functionals, targets, nugget: self.nugget, interior }
            .validate_self()
    }

    fn validate_self(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn functionals(&self) -> &[LinearFunctional] {
        &self.functionals
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn nugget(&self) -> Nugget {
        self.nugget
    }

    pub fn interior(&self) -> Range<usize> {
        self.interior.clone()
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }
}

/// `[φ̃ᵢ, K φ̃ⱼ]`, symmetrized after assembly.
pub fn assemble_gram(functionals: &[LinearFunctional], kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    let m = functionals.len();
    let mut g = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for ti in functionals[i].terms() {
                for tj in functionals[j].terms() {
                    acc += ti.weight
                        * tj.weight
                        * kernel.deriv(ti.location, tj.location, ti.deriv_order, tj.deriv_order)?;
                }
            }
            g[(i, j)] = acc;
            g[(j, i)] = acc;
        }
    }
    Ok(g)
}

/// Entries `∂ᵤ^order φ̃ᵢ[K(u, ·)]`.
pub fn cross_vector(
    functionals: &[LinearFunctional],
    kernel: &KernelSpec,
    u: f64,
    order: u8,
) -> Result<DVector<f64>> {
    let mut v = DVector::zeros(functionals.len());
    for (i, f) in functionals.iter().enumerate() {
        let mut acc = 0.0;
        for t in f.terms() {
            acc += t.weight * kernel.deriv(u, t.location, order, t.deriv_order)?;
        }
        v[i] = acc;
    }
    Ok(v)
}

/// Cholesky factor of `G + λI` with the nugget that made it succeed.
#[derive(Debug, Clone)]
pub struct FactoredGram {
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
}

impl FactoredGram {
    /// Factors `G + λI`, multiplying `λ` by 10 up to [`JITTER_ESCALATIONS`] times.
    pub fn new(gram: &DMatrix<f64>, nugget: f64) -> Result<Self> {
        if !(nugget > 0.0 && nugget.is_finite()) {
            return Err(Error::InvalidParameters(format!("nugget must be positive, got {nugget}")));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow("Gram matrix has non-finite entries".into()));
        }
        let mut lambda = nugget;
        for attempt in 0..=JITTER_ESCALATIONS {
            let mut a = gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            if let Some(chol) = Cholesky::new(a) {
                return Ok(FactoredGram { chol, nugget: lambda });
            }
            if attempt < JITTER_ESCALATIONS {
                lambda *= 10.0;
            }
        }
        Err(Error::Singular { condition: condition_estimate(gram), nugget: lambda })
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `yᵀ (G + λI)⁻¹ y`, computed as `‖L⁻¹y‖²` so it is never negative.
    pub fn quad_form(&self, y: &DVector<f64>) -> f64 {
        let mut z = y.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut z);
        // l_dirty's upper part is garbage only above the diagonal; the solve
        // above reads the lower triangle.
        z.norm_squared()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

fn condition_estimate(gram: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Representer-theorem solution of a constraint system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    pub kernel: KernelSpec,
    pub functionals: Vec<LinearFunctional>,
    pub coefficients: Vec<f64>,
    /// Nugget actually used in the solve (after any escalation).
    pub nugget: f64,
}

impl Interpolant {
    /// The identically-zero map.
    pub fn zero(kernel: KernelSpec) -> Self {
        Interpolant { kernel, functionals: Vec::new(), coefficients: Vec::new(), nugget: 0.0 }
    }

    /// `∂ᵤ^order D(u)`.
    pub fn evaluate(&self, u: f64, deriv_order: u8) -> Result<f64> {
        let mut acc = 0.0;
        for (alpha, f) in self.coefficients.iter().zip(&self.functionals) {
            for t in f.terms() {
                acc += alpha * t.weight * self.kernel.deriv(u, t.location, deriv_order, t.deriv_order)?;
            }
        }
        Ok(acc)
    }

    pub fn evaluate_many(&self, us: &[f64], deriv_order: u8) -> Result<Vec<f64>> {
        us.iter().map(|&u| self.evaluate(u, deriv_order)).collect()
    }

    /// `φ̃(D)` for an arbitrary functional.
    pub fn apply(&self, f: &LinearFunctional) -> Result<f64> {
        let mut acc = 0.0;
        for t in f.terms() {
            acc += t.weight * self.evaluate(t.location, t.deriv_order)?;
        }
        Ok(acc)
    }
}

/// Solves `(K(φ̃, φ̃) + λI) α = Y`.
pub fn fit(system: &ConstraintSystem, kernel: &KernelSpec) -> Result<Interpolant> {
    kernel.validate()?;
    if system.is_empty() {
        return Ok(Interpolant::zero(*kernel));
    }
    let gram = assemble_gram(system.functionals(), kernel)?;
    let factor = FactoredGram::new(&gram, system.nugget().resolve(&gram))?;
    let y = DVector::from_column_slice(system.targets());
    let alpha = factor.solve(&y);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Overflow("representer coefficients".into()));
    }
    Ok(Interpolant {
        kernel: *kernel,
        functionals: system.functionals().to_vec(),
        coefficients: alpha.iter().copied().collect(),
        nugget: factor.nugget(),
    })
}

/// `Yᵀ (K(φ̃, φ̃) + λI)⁻¹ Y`.
pub fn rkhs_norm_sq(system: &ConstraintSystem, kernel: &KernelSpec) -> Result<f64> {
    if system.is_empty() {
        return Ok(0.0);
    }
    let gram = assemble_gram(system.functionals(), kernel)?;
    let factor = FactoredGram::new(&gram, system.nugget().resolve(&gram))?;
    Ok(factor.quad_form(&DVector::from_column_slice(system.targets())))
}

/// Posterior standard deviation `σ(u)` with
/// `σ² = K(u,u) − K(u,φ̃)(K(φ̃,φ̃)+λI)⁻¹K(φ̃,u)`, so that
/// `|f(u) − D(u)| ≤ σ(u) ‖f‖` for any `f` meeting the constraints.
pub fn error_bound_sigma(system: &ConstraintSystem, kernel: &KernelSpec, u: f64) -> Result<f64> {
    let kuu = kernel.deriv(u, u, 0, 0)?;
    if system.is_empty() {
        return Ok(kuu.max(0.0).sqrt());
    }
    let gram = assemble_gram(system.functionals(), kernel)?;
    let factor = FactoredGram::new(&gram, system.nugget().resolve(&gram))?;
    let k = cross_vector(system.functionals(), kernel, u, 0)?;
    let var = kuu - factor.quad_form(&k);
    Ok(var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn matern(theta: f64) -> KernelSpec {
        KernelSpec::matern52(theta).unwrap()
    }

    fn two_point(nugget: f64) -> ConstraintSystem {
        ConstraintSystem::new(
            vec![LinearFunctional::dirac(0.0), LinearFunctional::dirac(1.0)],
            vec![1.0, 0.0],
            Nugget::Fixed(nugget),
        )
        .unwrap()
    }

    #[test]
    fn gram_examples() {
        let k = matern(1.0);
        let g = assemble_gram(&[LinearFunctional::dirac(0.0)], &k).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        let g = assemble_gram(&[LinearFunctional::dirac(0.0), LinearFunctional::dirac(0.0)], &k).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));
        let d = LinearFunctional::new(vec![FunctionalTerm::new(0.0, 1, 1.0)]).unwrap();
        let g = assemble_gram(&[d], &k).unwrap();
        assert_relative_eq!(g[(0, 0)], 5.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn functional_validation() {
        assert!(LinearFunctional::new(vec![]).is_err());
        assert!(LinearFunctional::new(vec![FunctionalTerm::new(0.0, 3, 1.0)]).is_err());
        assert!(LinearFunctional::new(vec![FunctionalTerm::new(0.0, 0, f64::NAN)]).is_err());
        assert!(ConstraintSystem::new(vec![LinearFunctional::dirac(0.0)], vec![], Nugget::Auto).is_err());
        assert!(ConstraintSystem::new(vec![LinearFunctional::dirac(0.0)], vec![1.0], Nugget::Fixed(0.0)).is_err());
    }

    #[test]
    fn zero_targets_give_zero_map() {
        let sys = two_point(1e-10).with_targets(vec![0.0, 0.0]).unwrap();
        let interp = fit(&sys, &matern(1.0)).unwrap();
        assert!(interp.coefficients.iter().all(|&a| a == 0.0));
        assert_eq!(interp.evaluate(0.37, 0).unwrap(), 0.0);
        assert_eq!(Interpolant::zero(matern(1.0)).evaluate(3.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn interpolates_own_constraints() {
        let interp = fit(&two_point(1e-10), &matern(1.0)).unwrap();
        assert!((interp.evaluate(0.0, 0).unwrap() - 1.0).abs() <= 1e-6);
        assert!(interp.evaluate(1.0, 0).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn residual_bound_holds() {
        let k = matern(0.7);
        let mut fs = vec![LinearFunctional::dirac(0.0)];
        for i in 0..20 {
            let u = 0.1 + 0.2 * i as f64;
            fs.push(
                LinearFunctional::new(vec![FunctionalTerm::new(u, 2, 0.5), FunctionalTerm::new(u, 1, 0.5)]).unwrap(),
            );
        }
        fs.push(LinearFunctional::dirac(1.0));
        let mut y = vec![0.0; fs.len()];
        y[0] = 1.0;
        let sys = ConstraintSystem::new(fs, y, Nugget::Auto).unwrap();
        let interp = fit(&sys, &k).unwrap();
        let amax = interp.coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        for (f, y) in sys.functionals().iter().zip(sys.targets()) {
            let r = (interp.apply(f).unwrap() - y).abs();
            assert!(r <= 10.0 * interp.nugget * amax + 1e-10, "residual {r}");
        }
    }

    #[test]
    fn derivative_evaluation_matches_fd() {
        let interp = fit(&two_point(1e-10), &matern(1.0)).unwrap();
        let h = 1e-5;
        for &u in &[-0.7, 0.33, 0.5, 1.8] {
            let d1 = interp.evaluate(u, 1).unwrap();
            let fd1 = (interp.evaluate(u + h, 0).unwrap() - interp.evaluate(u - h, 0).unwrap()) / (2.0 * h);
            assert_relative_eq!(d1, fd1, max_relative = 1e-4, epsilon = 1e-8);
            let d2 = interp.evaluate(u, 2).unwrap();
            let fd2 = (interp.evaluate(u + h, 1).unwrap() - interp.evaluate(u - h, 1).unwrap()) / (2.0 * h);
            assert_relative_eq!(d2, fd2, max_relative = 1e-4, epsilon = 1e-8);
        }
    }

    #[test]
    fn norm_examples() {
        let k = matern(1.0);
        let sys = ConstraintSystem::new(vec![LinearFunctional::dirac(0.0)], vec![0.0], Nugget::Fixed(1e-12)).unwrap();
        assert_eq!(rkhs_norm_sq(&sys, &k).unwrap(), 0.0);
        let sys = sys.with_targets(vec![1.0]).unwrap();
        // 1 / (K(0,0) + λ)
        assert_relative_eq!(rkhs_norm_sq(&sys, &k).unwrap(), 1.0 / (1.0 + 1e-12), max_relative = 1e-14);
    }

    #[test]
    fn sigma_examples() {
        let k = matern(1.0);
        let empty = ConstraintSystem::new(vec![], vec![], Nugget::Auto).unwrap();
        assert_eq!(error_bound_sigma(&empty, &k, 2.0).unwrap(), 1.0);
        let sys = two_point(1e-12);
        assert!(error_bound_sigma(&sys, &k, 0.0).unwrap() <= 1e-5);
        // nested sets shrink σ pointwise
        let mut grow = ConstraintSystem::new(vec![LinearFunctional::dirac(0.0)], vec![1.0], Nugget::Fixed(1e-12)).unwrap();
        let probes = [0.25, 0.5, 0.9, 1.4];
        let mut prev: Vec<f64> = probes.iter().map(|&u| error_bound_sigma(&grow, &k, u).unwrap()).collect();
        for loc in [1.0, 0.5, 0.2, 1.7] {
            grow.push(LinearFunctional::dirac(loc), 0.0);
            let now: Vec<f64> = probes.iter().map(|&u| error_bound_sigma(&grow, &k, u).unwrap()).collect();
            for (a, b) in now.iter().zip(&prev) {
                assert!(*a <= *b + 1e-9);
            }
            prev = now;
        }
    }

    #[test]
    fn jitter_escalates_then_fails() {
        // Negative-definite "Gram" cannot be rescued by a small nugget.
        let g = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        match FactoredGram::new(&g, 1e-8) {
            Err(Error::Singular { nugget, .. }) => assert_relative_eq!(nugget, 1e-4, max_relative = 1e-12),
            other => panic!("expected singular error, got {other:?}"),
        }
        // Slightly indefinite matrix recovers after escalation.
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-7]);
        let f = FactoredGram::new(&g, 1e-9).unwrap();
        assert!(f.nugget() > 1e-9);
    }

    #[test]
    fn auto_nugget_scales_with_trace() {
        let g = DMatrix::from_diagonal_element(4, 4, 2.0);
        assert_relative_eq!(Nugget::Auto.resolve(&g), 2e-8);
        assert_eq!(Nugget::Fixed(0.5).resolve(&g), 0.5);
    }

    #[test]
    fn interpolant_json_round_trip() {
        let interp = fit(&two_point(1e-10), &matern(1.0)).unwrap();
        let s = serde_json::to_string(&interp).unwrap();
        let back: Interpolant = serde_json::from_str(&s).unwrap();
        assert_eq!(back, interp);
        assert!(serde_json::from_str::<LinearFunctional>("[]").is_err());
    }

    #[test]
    fn select_keeps_interior() {
        let mut fs = vec![LinearFunctional::dirac(0.0)];
        fs.extend((1..5).map(|i| LinearFunctional::dirac(i as f64)));
        fs.push(LinearFunctional::dirac(9.0));
        let sys = ConstraintSystem::new(fs, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], Nugget::Auto)
            .unwrap()
            .with_interior(1..5)
            .unwrap();
        let sub = sys.select(&[0, 1, 3, 4, 5]).unwrap();
        assert_eq!(sub.len(), 5);
        assert_eq!(sub.interior(), 1..4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn linear_in_targets(c in -5.0..5.0f64, y0 in -2.0..2.0f64, y1 in -2.0..2.0f64, y2 in -2.0..2.0f64) {
            let k = matern(1.0);
            let fs = vec![
                LinearFunctional::dirac(0.0),
                LinearFunctional::new(vec![FunctionalTerm::new(0.5, 1, 1.0)]).unwrap(),
                LinearFunctional::dirac(1.3),
            ];
            let base = ConstraintSystem::new(fs, vec![y0, y1, y2], Nugget::Fixed(1e-9)).unwrap();
            let scaled = base.clone().with_targets(vec![c * y0, c * y1, c * y2]).unwrap();
            let a = fit(&base, &k).unwrap();
            let b = fit(&scaled, &k).unwrap();
            for u in [-0.3, 0.2, 0.9, 2.0] {
                let va = a.evaluate(u, 0).unwrap();
                let vb = b.evaluate(u, 0).unwrap();
                prop_assert!((vb - c * va).abs() <= 1e-9 * (1.0 + vb.abs()));
            }
        }

        #[test]
        fn norm_nondecreasing_when_appending(locs in proptest::collection::vec(-3.0..3.0f64, 2..12), ys in proptest::collection::vec(-1.0..1.0f64, 12)) {
            let k = matern(1.0);
            let mut sys = ConstraintSystem::new(vec![], vec![], Nugget::Fixed(1e-10)).unwrap();
            let mut prev = 0.0;
            for (i, loc) in locs.iter().enumerate() {
                sys.push(LinearFunctional::dirac(*loc), ys[i]);
                let now = rkhs_norm_sq(&sys, &k).unwrap();
                prop_assert!(now >= prev * (1.0 - 1e-9) - 1e-12, "{} < {}", now, prev);
                prev = now;
            }
        }
    }
}
