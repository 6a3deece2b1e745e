//! Kernel definitions with closed-form mixed partial derivatives.
//!
//! Scalar kernels (Matérn-5/2 and constant) expose `∂ₓᵃ∂ᵧᵇ K(x, y)` for
//! `a, b ≤ 2`, which is what Gram matrices of derivative functionals need.
//! The homogeneous polynomial kernel on 2-D inputs is handled through its
//! explicit monomial feature map instead; see [`monomial_features`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Highest derivative order accepted in either argument.
pub const MAX_DERIV_ORDER: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum KernelSpec {
    /// `(1 + √5 r/θ + 5r²/(3θ²)) exp(−√5 r/θ)` with `r = |x − y|`.
    #[serde(rename = "matern52")]
    Matern52 { theta: f64 },
    /// `(sᵀt)^degree` on vectors of length `input_dim`.
    #[serde(rename = "poly")]
    HomogeneousPolynomial {
        degree: u32,
        #[serde(default = "default_poly_dim")]
        input_dim: usize,
    },
    /// `K(x, y) = Γ`.
    #[serde(rename = "constant")]
    Constant { gamma: f64 },
}

fn default_poly_dim() -> usize {
    2
}

impl KernelSpec {
    pub fn matern52(theta: f64) -> Result<Self> {
        let k = KernelSpec::Matern52 { theta };
        k.validate()?;
        Ok(k)
    }

    pub fn poly(degree: u32, input_dim: usize) -> Result<Self> {
        let k = KernelSpec::HomogeneousPolynomial { degree, input_dim };
        k.validate()?;
        Ok(k)
    }

    pub fn constant(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Constant { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Matern52 { .. } => "matern52",
            KernelSpec::HomogeneousPolynomial { .. } => "poly",
            KernelSpec::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Matern52 { theta } if !(theta > 0.0 && theta.is_finite()) => Err(
                Error::InvalidParameters(format!("Matérn lengthscale must be positive, got {theta}")),
            ),
            KernelSpec::HomogeneousPolynomial { degree, input_dim } if degree == 0 || input_dim == 0 => {
                Err(Error::InvalidParameters(format!(
                    "polynomial kernel needs degree >= 1 and input_dim >= 1, got ({degree}, {input_dim})"
                )))
            }
            KernelSpec::Constant { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::InvalidParameters(format!("constant kernel value must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Number of coordinates each input must have.
    pub fn input_dim(&self) -> usize {
        match *self {
            KernelSpec::HomogeneousPolynomial { input_dim, .. } => input_dim,
            _ => 1,
        }
    }

    /// `K(x, y)` for inputs of the kernel's dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let dim = self.input_dim();
        if x.len() != dim || y.len() != dim {
            return Err(Error::InvalidInput(format!(
                "{} kernel expects inputs of length {dim}, got {} and {}",
                self.name(),
                x.len(),
                y.len()
            )));
        }
        Ok(match *self {
            KernelSpec::Matern52 { theta } => matern_radial(x[0] - y[0], theta, 0),
            KernelSpec::Constant { gamma } => gamma,
            KernelSpec::HomogeneousPolynomial { degree, .. } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                dot.powi(degree as i32)
            }
        })
    }

    /// `K(x, y)` for scalar inputs.
    pub fn eval_scalar(&self, x: f64, y: f64) -> Result<f64> {
        self.eval(&[x], &[y])
    }

    /// `∂ₓᵃ ∂ᵧᵇ K(x, y)` for scalar inputs.
    pub fn deriv(&self, x: f64, y: f64, a: u8, b: u8) -> Result<f64> {
        if a > MAX_DERIV_ORDER || b > MAX_DERIV_ORDER {
            return Err(Error::UnsupportedDerivative { kernel: self.name(), a, b });
        }
        match *self {
            // ∂ₓᵃ∂ᵧᵇ f(x − y) = (−1)ᵇ f⁽ᵃ⁺ᵇ⁾(x − y)
            KernelSpec::Matern52 { theta } => {
                let sign = if b.is_multiple_of(2) { 1.0 } else { -1.0 };
                Ok(sign * matern_radial(x - y, theta, a + b))
            }
            KernelSpec::Constant { gamma } => Ok(if a == 0 && b == 0 { gamma } else { 0.0 }),
            KernelSpec::HomogeneousPolynomial { degree, input_dim } => {
                if input_dim != 1 {
                    return Err(Error::UnsupportedDerivative { kernel: self.name(), a, b });
                }
                // (xy)^d: ∂ₓᵃ∂ᵧᵇ = d!/(d−a)! · d!/(d−b)! · x^(d−a) y^(d−b)
                let d = degree as i32;
                let (a, b) = (a as i32, b as i32);
                if a > d || b > d {
                    return Ok(0.0);
                }
                Ok(falling(d, a) * falling(d, b) * x.powi(d - a) * y.powi(d - b))
            }
        }
    }

    /// Mixed partial of the 2-D polynomial kernel,
    /// `∂^{ds.order}/∂s_{ds.coord} ∂^{dt.order}/∂t_{dt.coord} (sᵀt)^d`,
    /// computed through the monomial feature expansion.
    pub fn poly_partial(&self, s: [f64; 2], t: [f64; 2], ds: Partial, dt: Partial) -> Result<f64> {
        match *self {
            KernelSpec::HomogeneousPolynomial { degree, input_dim: 2 } => {
                let fs = monomial_feature_partials(degree, s, ds)?;
                let ft = monomial_feature_partials(degree, t, dt)?;
                Ok(fs.iter().zip(&ft).map(|(a, b)| a * b).sum())
            }
            _ => Err(Error::UnsupportedDerivative {
                kernel: self.name(),
                a: ds.order,
                b: dt.order,
            }),
        }
    }
}

fn falling(n: i32, k: i32) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// n-th derivative of the Matérn-5/2 profile `f(r)` with respect to signed lag `r`.
fn matern_radial(r: f64, theta: f64, n: u8) -> f64 {
    let t2 = theta * theta;
    if r == 0.0 {
        return match n {
            0 => 1.0,
            2 => -5.0 / (3.0 * t2),
            4 => 25.0 / (t2 * t2),
            _ => 0.0,
        };
    }
    let d = r.abs() / theta;
    let e = (-SQRT5 * d).exp();
    match n {
        0 => (1.0 + SQRT5 * d + 5.0 / 3.0 * d * d) * e,
        1 => -5.0 / 3.0 * (r / t2) * (1.0 + SQRT5 * d) * e,
        2 => -5.0 / (3.0 * t2) * (1.0 + SQRT5 * d - 5.0 * d * d) * e,
        3 => 25.0 / 3.0 * (r / (t2 * t2)) * (3.0 - SQRT5 * d) * e,
        4 => 25.0 / (3.0 * t2 * t2) * (3.0 - 5.0 * SQRT5 * d + 5.0 * d * d) * e,
        _ => unreachable!("radial derivative order above 4"),
    }
}

/// One coordinate direction and derivative order for [`KernelSpec::poly_partial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partial {
    pub coord: usize,
    pub order: u8,
}

impl Partial {
    pub const NONE: Partial = Partial { coord: 0, order: 0 };
}

pub fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Feature map `φₖ(s) = √C(d,k) s₀^(d−k) s₁^k`, `k = 0..=d`, so that
/// `(sᵀt)^d = φ(s)ᵀφ(t)`.
pub fn monomial_features(degree: u32, s: [f64; 2]) -> Vec<f64> {
    (0..=degree)
        .map(|k| binomial(degree, k).sqrt() * s[0].powi((degree - k) as i32) * s[1].powi(k as i32))
        .collect()
}

/// Plain monomials `s₀^(d−k) s₁^k` (no binomial scaling).
pub fn monomials(degree: u32, s: [f64; 2]) -> Vec<f64> {
    (0..=degree)
        .map(|k| s[0].powi((degree - k) as i32) * s[1].powi(k as i32))
        .collect()
}

/// Partial derivative of each scaled feature along one coordinate.
pub fn monomial_feature_partials(degree: u32, s: [f64; 2], p: Partial) -> Result<Vec<f64>> {
    if p.coord > 1 || p.order > MAX_DERIV_ORDER {
        return Err(Error::UnsupportedDerivative { kernel: "poly", a: p.order, b: 0 });
    }
    let d = degree as i32;
    let o = p.order as i32;
    Ok((0..=d)
        .map(|k| {
            let (e0, e1) = (d - k, k);
            let (mut c0, mut c1) = (1.0, 1.0);
            let (mut p0, mut p1) = (e0, e1);
            if p.coord == 0 {
                if o > e0 {
                    return 0.0;
                }
                c0 = falling(e0, o);
                p0 = e0 - o;
            } else {
                if o > e1 {
                    return 0.0;
                }
                c1 = falling(e1, o);
                p1 = e1 - o;
            }
            binomial(degree, k as u32).sqrt() * c0 * s[0].powi(p0) * c1 * s[1].powi(p1)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Central-difference oracle built only on lower-order evaluations.
    fn fd_deriv(k: &KernelSpec, x: f64, y: f64, a: u8, b: u8, h: f64) -> f64 {
        if a == 0 && b == 0 {
            return k.eval_scalar(x, y).unwrap();
        }
        if a > 0 {
            (fd_deriv(k, x + h, y, a - 1, b, h) - fd_deriv(k, x - h, y, a - 1, b, h)) / (2.0 * h)
        } else {
            (fd_deriv(k, x, y + h, a, b - 1, h) - fd_deriv(k, x, y - h, a, b - 1, h)) / (2.0 * h)
        }
    }

    #[test]
    fn matern_values() {
        let k = KernelSpec::matern52(1.0).unwrap();
        assert_eq!(k.eval_scalar(0.0, 0.0).unwrap(), 1.0);
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert_relative_eq!(k.eval_scalar(0.0, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.523994, epsilon = 1e-6);
    }

    #[test]
    fn poly_values() {
        let k = KernelSpec::poly(4, 2).unwrap();
        assert_eq!(k.eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(k.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 16.0);
        assert!(matches!(k.eval(&[1.0], &[1.0, 0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn constant_kernel() {
        let k = KernelSpec::constant(2.5).unwrap();
        assert_eq!(k.eval_scalar(-3.0, 7.0).unwrap(), 2.5);
        assert_eq!(k.deriv(1.0, 2.0, 1, 0).unwrap(), 0.0);
        assert_eq!(k.deriv(1.0, 2.0, 0, 0).unwrap(), 2.5);
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::matern52(0.0).is_err());
        assert!(KernelSpec::matern52(f64::NAN).is_err());
        assert!(KernelSpec::constant(-1.0).is_err());
        assert!(KernelSpec::poly(0, 2).is_err());
    }

    #[test]
    fn zero_lag_limits() {
        let k = KernelSpec::matern52(1.0).unwrap();
        assert_eq!(k.deriv(0.3, 0.3, 1, 0).unwrap(), 0.0);
        assert_eq!(k.deriv(0.3, 0.3, 0, 1).unwrap(), 0.0);
        assert_relative_eq!(k.deriv(0.3, 0.3, 1, 1).unwrap(), 5.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(k.deriv(0.3, 0.3, 2, 2).unwrap(), 25.0, max_relative = 1e-15);
        // The oracle agrees with the analytic limits.
        assert_relative_eq!(fd_deriv(&k, 0.3, 0.3, 1, 1, 1e-4), 5.0 / 3.0, max_relative = 1e-6);
        let k2 = KernelSpec::matern52(0.5).unwrap();
        assert_relative_eq!(k2.deriv(1.0, 1.0, 1, 1).unwrap(), 5.0 / (3.0 * 0.25));
        assert_relative_eq!(k2.deriv(1.0, 1.0, 2, 2).unwrap(), 25.0 / 0.0625);
    }

    #[test]
    fn unsupported_orders() {
        let k = KernelSpec::matern52(1.0).unwrap();
        assert!(matches!(k.deriv(0.0, 1.0, 3, 0), Err(Error::UnsupportedDerivative { .. })));
        let p = KernelSpec::poly(4, 2).unwrap();
        assert!(matches!(p.deriv(0.0, 1.0, 1, 0), Err(Error::UnsupportedDerivative { .. })));
    }

    #[test]
    fn matern_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let theta = rng.gen_range(0.3..3.0);
            let x: f64 = rng.gen_range(-3.0..3.0);
            let y: f64 = rng.gen_range(-3.0..3.0);
            if (x - y).abs() < 0.05 {
                continue;
            }
            let k = KernelSpec::matern52(theta).unwrap();
            for a in 0..=2u8 {
                for b in 0..=2u8 {
                    let exact = k.deriv(x, y, a, b).unwrap();
                    // one FD level on top of the closed form of the lower order
                    let approx = if a + b == 0 {
                        k.eval_scalar(x, y).unwrap()
                    } else if a > 0 {
                        let h = 1e-5;
                        (k.deriv(x + h, y, a - 1, b).unwrap() - k.deriv(x - h, y, a - 1, b).unwrap()) / (2.0 * h)
                    } else {
                        let h = 1e-5;
                        (k.deriv(x, y + h, a, b - 1).unwrap() - k.deriv(x, y - h, a, b - 1).unwrap()) / (2.0 * h)
                    };
                    let scale = exact.abs().max(1e-3);
                    assert!(
                        (exact - approx).abs() <= 1e-5 * scale,
                        "θ={theta} x={x} y={y} ({a},{b}): {exact} vs {approx}"
                    );
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn matern_derivatives_match_pure_value_oracle() {
        // Oracle built from k_eval only.
        let k = KernelSpec::matern52(1.3).unwrap();
        for &(x, y) in &[(0.4, 1.1), (-0.7, 0.2), (2.0, 0.5)] {
            for a in 0..=2u8 {
                for b in 0..=2u8 {
                    let exact = k.deriv(x, y, a, b).unwrap();
                    let approx = fd_deriv(&k, x, y, a, b, 1e-3);
                    assert_relative_eq!(exact, approx, max_relative = 1e-4, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn scalar_poly_derivatives() {
        let k = KernelSpec::poly(3, 1).unwrap();
        for a in 0..=2u8 {
            for b in 0..=2u8 {
                let exact = k.deriv(0.7, -1.2, a, b).unwrap();
                let approx = fd_deriv(&k, 0.7, -1.2, a, b, 1e-3);
                assert_relative_eq!(exact, approx, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn feature_map_reproduces_kernel() {
        let k = KernelSpec::poly(4, 2).unwrap();
        let s = [0.3, -1.1];
        let t = [1.7, 0.4];
        let fs = monomial_features(4, s);
        let ft = monomial_features(4, t);
        let dot: f64 = fs.iter().zip(&ft).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, k.eval(&s, &t).unwrap(), max_relative = 1e-13);
        assert_eq!(fs.len(), 5);
    }

    #[test]
    fn poly_partials_match_finite_differences() {
        let k = KernelSpec::poly(4, 2).unwrap();
        let s = [0.3, -1.1];
        let t = [1.7, 0.4];
        let h = 1e-4;
        for coord in 0..2 {
            let p = Partial { coord, order: 1 };
            let exact = k.poly_partial(s, t, p, Partial::NONE).unwrap();
            let mut sp = s;
            let mut sm = s;
            sp[coord] += h;
            sm[coord] -= h;
            let approx = (k.eval(&sp, &t).unwrap() - k.eval(&sm, &t).unwrap()) / (2.0 * h);
            assert_relative_eq!(exact, approx, epsilon = 1e-7);
            let p2 = Partial { coord, order: 2 };
            let exact2 = k.poly_partial(s, t, p2, Partial::NONE).unwrap();
            let approx2 = (k.eval(&sp, &t).unwrap() - 2.0 * k.eval(&s, &t).unwrap() + k.eval(&sm, &t).unwrap())
                / (h * h);
            assert_relative_eq!(exact2, approx2, max_relative = 1e-4);
        }
        assert!(KernelSpec::matern52(1.0)
            .unwrap()
            .poly_partial(s, t, Partial::NONE, Partial::NONE)
            .is_err());
    }

    #[test]
    fn gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for theta in [0.1, 1.0, 10.0] {
            let k = KernelSpec::matern52(theta).unwrap();
            let pts: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let g = DMatrix::from_fn(50, 50, |i, j| k.eval_scalar(pts[i], pts[j]).unwrap());
            let eig = SymmetricEigen::new(g).eigenvalues;
            let max = eig.max();
            assert!(eig.min() >= -1e-8 * max, "θ={theta}: min eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn serde_format() {
        let k: KernelSpec = serde_json::from_str(r#"{"kind":"matern52","theta":0.5}"#).unwrap();
        assert_eq!(k, KernelSpec::Matern52 { theta: 0.5 });
        let p: KernelSpec = serde_json::from_str(r#"{"kind":"poly","degree":4}"#).unwrap();
        assert_eq!(p, KernelSpec::HomogeneousPolynomial { degree: 4, input_dim: 2 });
        let c: KernelSpec = serde_json::from_str(r#"{"kind":"constant","gamma":1.0}"#).unwrap();
        assert_eq!(c, KernelSpec::Constant { gamma: 1.0 });
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);
    }

    proptest! {
        #[test]
        fn symmetry(x in -10.0..10.0f64, y in -10.0..10.0f64, theta in 0.05..20.0f64) {
            let k = KernelSpec::Matern52 { theta };
            prop_assert_eq!(k.eval_scalar(x, y).unwrap(), k.eval_scalar(y, x).unwrap());
            let v = k.eval_scalar(x, y).unwrap();
            prop_assert!(v > 0.0 || (x - y).abs() / theta > 100.0);
            prop_assert!(v <= 1.0);
        }

        #[test]
        fn mixed_derivative_symmetry(x in -5.0..5.0f64, y in -5.0..5.0f64, a in 0u8..=2, b in 0u8..=2) {
            let k = KernelSpec::Matern52 { theta: 0.8 };
            let lhs = k.deriv(x, y, a, b).unwrap();
            let rhs = k.deriv(y, x, b, a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn stationarity(x in -5.0..5.0f64, y in -5.0..5.0f64, shift in -50.0..50.0f64) {
            let k = KernelSpec::Matern52 { theta: 1.7 };
            let a = k.eval_scalar(x, y).unwrap();
            let b = k.eval_scalar(x + shift, y + shift).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn poly_symmetry(s0 in -2.0..2.0f64, s1 in -2.0..2.0f64, t0 in -2.0..2.0f64, t1 in -2.0..2.0f64) {
            let k = KernelSpec::HomogeneousPolynomial { degree: 4, input_dim: 2 };
            prop_assert_eq!(k.eval(&[s0, s1], &[t0, t1]).unwrap(), k.eval(&[t0, t1], &[s0, s1]).unwrap());
        }
    }
}
