//! Forward solvers and closed-form oracles.
//!
//! 1-D fields live on uniform grids. Spatial derivatives use second-order
//! central differences in the interior and second-order one-sided stencils at
//! both ends. Time stepping is explicit Euler for the PDEs and classical RK4
//! for ODEs.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest magnitude allowed in a field stepped by [`PdeKind::NonlinFirstOrder`].
pub const NONLIN_MIN_ABS: f64 = 1e-6;

/// Heat/Burgers explicit-Euler stability limit on `hν/dx²`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x0: f64, dx: f64, n: usize) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) || !x0.is_finite() {
            return Err(Error::InvalidInput(format!("grid needs finite x0 and dx > 0, got ({x0}, {dx})")));
        }
        if n < 3 {
            return Err(Error::InvalidInput(format!("grid needs at least 3 points, got {n}")));
        }
        Ok(Grid1D { x0, dx, n })
    }

    /// `n` points from `a` to `b` inclusive.
    pub fn spanning(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 3 || !(b > a) {
            return Err(Error::InvalidInput(format!("cannot span [{a}, {b}] with {n} points")));
        }
        Grid1D::new(a, (b - a) / (n - 1) as f64, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.n - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field1D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl Field1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        Ok(Field1D { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Field1D { grid, values }
    }

    fn with_values(&self, values: Vec<f64>) -> Field1D {
        Field1D { grid: self.grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Spatial derivative of order 1 or 2.
pub fn diff(field: &Field1D, order: u8) -> Result<Field1D> {
    let v = &field.values;
    let n = v.len();
    let dx = field.grid.dx;
    match order {
        1 => {
            if n < 3 {
                return Err(Error::InvalidInput("first derivative needs at least 3 points".into()));
            }
            let mut out = vec![0.0; n];
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
            }
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
            Ok(field.with_values(out))
        }
        2 => {
            if n < 4 {
                return Err(Error::InvalidInput("second derivative needs at least 4 points".into()));
            }
            let dx2 = dx * dx;
            let mut out = vec![0.0; n];
            out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dx2;
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / dx2;
            }
            out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / dx2;
            Ok(field.with_values(out))
        }
        _ => Err(Error::InvalidInput(format!("unsupported spatial derivative order {order}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PdeKind {
    /// `v_t = ν v_xx − v v_x`
    Burgers { nu: f64 },
    /// `w_t = ν w_xx`
    Heat { nu: f64 },
    /// `u_t = u_x − 1/u²`
    NonlinFirstOrder,
    /// `w_t = w_x − w`
    LinFirstOrder,
}

impl PdeKind {
    fn viscosity(&self) -> Option<f64> {
        match *self {
            PdeKind::Burgers { nu } | PdeKind::Heat { nu } => Some(nu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeStep {
    pub field: Field1D,
    /// `hν/dx²` for the diffusive equations.
    pub cfl_ratio: Option<f64>,
    pub cfl_warning: bool,
}

/// One explicit Euler step of size `h`.
pub fn pde_step(kind: PdeKind, field: &Field1D, h: f64) -> Result<PdeStep> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameters(format!("time step must be positive, got {h}")));
    }
    if let Some(nu) = kind.viscosity() {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameters(format!("viscosity must be positive, got {nu}")));
        }
    }
    let v = &field.values;
    let rate: Vec<f64> = match kind {
        PdeKind::Burgers { nu } => {
            let d1 = diff(field, 1)?;
            let d2 = diff(field, 2)?;
            (0..v.len()).map(|i| nu * d2.values[i] - v[i] * d1.values[i]).collect()
        }
        PdeKind::Heat { nu } => diff(field, 2)?.values.iter().map(|d| nu * d).collect(),
        PdeKind::NonlinFirstOrder => {
            let positive = v.iter().any(|&x| x > 0.0);
            let negative = v.iter().any(|&x| x < 0.0);
            if v.iter().any(|x| x.abs() < NONLIN_MIN_ABS) || (positive && negative) {
                return Err(Error::Singularity("field crosses zero; 1/u² is unbounded".into()));
            }
            let d1 = diff(field, 1)?;
            (0..v.len()).map(|i| d1.values[i] - 1.0 / (v[i] * v[i])).collect()
        }
        PdeKind::LinFirstOrder => {
            let d1 = diff(field, 1)?;
            (0..v.len()).map(|i| d1.values[i] - v[i]).collect()
        }
    };
    let values: Vec<f64> = v.iter().zip(&rate).map(|(x, r)| x + h * r).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("PDE step (check the CFL condition)".into()));
    }
    let cfl_ratio = kind.viscosity().map(|nu| h * nu / (field.grid.dx * field.grid.dx));
    Ok(PdeStep {
        field: field.with_values(values),
        cfl_ratio,
        cfl_warning: cfl_ratio.is_some_and(|r| r > CFL_LIMIT),
    })
}

/// Cumulative trapezoid integral pinned to `value_at_anchor` at `anchor_x`.
pub fn antiderivative(field: &Field1D, value_at_anchor: f64, anchor_x: f64) -> Result<Field1D> {
    let g = field.grid;
    let span = g.x_end() - g.x0;
    let offset = anchor_x - g.x0;
    // small tolerance so grid endpoints computed in floating point still count
    if !(offset >= -1e-12 * span && offset <= span * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor_x} outside grid [{}, {}]",
            g.x0,
            g.x_end()
        )));
    }
    let v = &field.values;
    let mut cum = vec![0.0; v.len()];
    for i in 1..v.len() {
        cum[i] = cum[i - 1] + 0.5 * g.dx * (v[i - 1] + v[i]);
    }
    let pos = (offset / g.dx).clamp(0.0, (v.len() - 1) as f64);
    let k = (pos.floor() as usize).min(v.len() - 2);
    let frac = pos - k as f64;
    let at_anchor = cum[k] + frac * (cum[k + 1] - cum[k]);
    let shift = value_at_anchor - at_anchor;
    Ok(field.with_values(cum.into_iter().map(|c| c + shift).collect()))
}

/// Time-sampled states of an ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("trajectory times must be strictly increasing".into()));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.len() != first.len()) {
                return Err(Error::InvalidInput("trajectory states have mixed dimensions".into()));
            }
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// One state coordinate over time.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[k]).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Uniform step if the samples are evenly spaced to relative tolerance `tol`.
    pub fn uniform_step(&self, tol: f64) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol * dt)
            .then_some(dt)
    }

    /// Writes `t,state…` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[&str]) -> io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.16e}")?;
            for v in s {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Classical RK4 from `t0` to `t1`; the final step is shortened to land on `t1`.
pub fn rk4<F>(rhs: F, y0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(Error::InvalidParameters(format!("rk4 needs dt > 0 and t1 > t0, got dt={dt}, [{t0}, {t1}]")));
    }
    let mut stepper = Rk4Stepper::new(y0.len());
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let steps = ((t1 - t0) / dt).ceil() as usize;
    for k in 0..steps {
        let target = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
        let h = target - t;
        if h <= 0.0 {
            continue;
        }
        stepper.step(&rhs, t, &mut y, h)?;
        t = target;
        times.push(t);
        states.push(y.clone());
    }
    Trajectory::new(times, states)
}

/// RK4 at step `dt`, keeping every `stride`-th state, `samples` states in total
/// (the first is `y0` at `t0`).
pub fn rk4_sampled<F>(rhs: F, y0: &[f64], t0: f64, dt: f64, stride: usize, samples: usize) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) || stride == 0 || samples == 0 {
        return Err(Error::InvalidParameters("rk4_sampled needs dt > 0, stride >= 1, samples >= 1".into()));
    }
    let mut stepper = Rk4Stepper::new(y0.len());
    let mut y = y0.to_vec();
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    times.push(t0);
    states.push(y.clone());
    let mut step = 0usize;
    while times.len() < samples {
        for _ in 0..stride {
            stepper.step(&rhs, t0 + step as f64 * dt, &mut y, dt)?;
            step += 1;
        }
        times.push(t0 + step as f64 * dt);
        states.push(y.clone());
    }
    Trajectory::new(times, states)
}

struct Rk4Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Stepper {
    fn new(n: usize) -> Self {
        Rk4Stepper { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    fn step<F: Fn(f64, &[f64], &mut [f64])>(&mut self, rhs: &F, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        let n = y.len();
        rhs(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(format!("rk4 state at t = {}", t + h)));
        }
        Ok(())
    }
}

/// Brusselator shifted so its equilibrium `(A, B/A)` sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Brusselator {
    pub a: f64,
    pub b: f64,
}

impl Brusselator {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameters(format!("Brusselator needs finite A != 0, got A={a}, B={b}")));
        }
        Ok(Brusselator { a, b })
    }

    pub fn rhs(&self, state: [f64; 2]) -> [f64; 2] {
        let (a, b) = (self.a, self.b);
        let uu = state[0] + a;
        let vv = state[1] + b / a;
        let reaction = uu * uu * vv;
        [a + reaction - (b + 1.0) * uu, b * uu - reaction]
    }

    pub fn rhs_into(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let d = self.rhs([y[0], y[1]]);
        out[0] = d[0];
        out[1] = d[1];
    }

    /// `μ = (B − (A²+1)) / √(4A² − (B − A² − 1)²)`.
    pub fn mu(&self) -> Result<f64> {
        mu_from_ab(self.a, self.b)
    }
}

pub fn mu_from_ab(a: f64, b: f64) -> Result<f64> {
    let excess = b - (a * a + 1.0);
    let radicand = 4.0 * a * a - excess * excess;
    if !(radicand > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "4A² - (B - A² - 1)² = {radicand} must be positive (A={a}, B={b})"
        )));
    }
    Ok(excess / radicand.sqrt())
}

/// Hopf normal form `ṙ = (μ − r²) r`, `θ̇ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfNormalForm {
    pub mu: f64,
}

impl HopfNormalForm {
    pub fn polar_rhs(&self, r: f64) -> f64 {
        (self.mu - r * r) * r
    }

    pub fn cartesian_rhs(&self, x: f64, y: f64) -> [f64; 2] {
        let g = self.mu - x * x - y * y;
        [g * x - y, g * y + x]
    }
}

/// Closed-form solution of `ṙ = (μ − r²) r` with `r(0) = r0 ≥ 0`.
pub fn r_exact(r0: f64, mu: f64, t: f64) -> f64 {
    if r0 == 0.0 {
        return 0.0;
    }
    if mu == 0.0 {
        return r0 / (1.0 + 2.0 * r0 * r0 * t).sqrt();
    }
    // r² = μ r0² / (r0² + (μ − r0²) e^{−2μt}); same as the e^{2μt} form but
    // does not overflow for large t.
    let r02 = r0 * r0;
    let e = (-2.0 * mu * t).exp();
    (mu * r02 / (r02 + (mu - r02) * e)).sqrt()
}

/// Built-in initial conditions with closed-form antiderivatives `∫₀ˣ`.
pub mod ic {
    use super::{Error, Result};

    #[derive(Debug, Clone, Copy)]
    pub struct InitialCondition {
        pub name: &'static str,
        /// Spatial interval the samples are drawn from.
        pub domain: (f64, f64),
        /// Field value at `(x, ν)`.
        pub value: fn(f64, f64) -> f64,
        /// `∫₀ˣ value(s, ν) ds`, where defined.
        pub antiderivative: Option<fn(f64, f64) -> f64>,
    }

    impl InitialCondition {
        /// `(x, u)` pairs at `n` evenly spaced points of the domain, with `u`
        /// the antiderivative (or the value itself when no antiderivative is
        /// registered).
        pub fn sample(&self, n: usize, nu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
            if n == 0 {
                return Err(Error::InvalidInput("need at least one sample".into()));
            }
            let (a, b) = self.domain;
            let xs: Vec<f64> = if n == 1 {
                vec![a]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            };
            let f = self.antiderivative.unwrap_or(self.value);
            let us = xs.iter().map(|&x| f(x, nu)).collect();
            Ok((xs, us))
        }
    }

    fn burgers_v0(x: f64, nu: f64) -> f64 {
        let pi = std::f64::consts::PI;
        28.0 * nu * pi * (pi * x).sin() / (7.0 + 3.2 * (pi * x).cos())
    }

    fn burgers_u0(x: f64, nu: f64) -> f64 {
        let pi = std::f64::consts::PI;
        28.0 * nu / 3.2 * (10.2 / (7.0 + 3.2 * (pi * x).cos())).ln()
    }

    /// `(3 log(cosh(−x) eˣ) + 1)^{1/3}`, with `log(cosh(x) eˣ) = log((1 + e^{2x})/2)`.
    fn first_order_u0(x: f64, _nu: f64) -> f64 {
        let l = if x > 0.0 {
            2.0 * x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
        } else {
            (2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
        };
        (3.0 * l + 1.0).cbrt()
    }

    pub const REGISTRY: &[InitialCondition] = &[
        InitialCondition {
            name: "burgers-paper",
            domain: (0.0, 1.0),
            value: burgers_v0,
            antiderivative: Some(burgers_u0),
        },
        InitialCondition {
            name: "multi-linear",
            domain: (-2.5, -1.5),
            value: |x, _| 5.0 + 3.0 * x,
            antiderivative: Some(|x, _| 5.0 * x + 1.5 * x * x),
        },
        InitialCondition {
            name: "multi-cosine",
            domain: (0.0, 1.0),
            value: |x, _| 5.0 * x.cos() + 2.0,
            antiderivative: Some(|x, _| 5.0 * x.sin() + 2.0 * x),
        },
        InitialCondition {
            name: "multi-exponential",
            domain: (15.0, 16.0),
            value: |x, _| (x / 3.0).exp() / 100.0,
            antiderivative: Some(|x, _| 3.0 * (x / 3.0).exp_m1() / 100.0),
        },
        InitialCondition {
            name: "multi-identity",
            domain: (10.0, 11.0),
            value: |x, _| x,
            antiderivative: Some(|x, _| 0.5 * x * x),
        },
        InitialCondition {
            name: "firstorder-paper",
            domain: (0.0, 1.0),
            value: first_order_u0,
            antiderivative: None,
        },
    ];

    /// The four pooled initial conditions of the multi-trajectory experiment.
    pub const MULTI_IC_NAMES: [&str; 4] = ["multi-linear", "multi-cosine", "multi-exponential", "multi-identity"];

    pub fn lookup(name: &str) -> Result<&'static InitialCondition> {
        REGISTRY
            .iter()
            .find(|ic| ic.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown initial condition '{name}'")))
    }
}
