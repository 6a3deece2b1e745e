//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gpsimplify::cgc::{cgc_pde_gradient, cgc_pde_loss, nf_h, CgcPdeProblem, CgcPdeState, LossWeights};
use gpsimplify::dynamics::{ic, pde_step, r_exact, rk4, Field1D, Grid1D, HopfNormalForm, PdeKind};
use gpsimplify::learning::{learn_theta, rho_loo, ThetaSearchConfig};
use gpsimplify::regression::assemble_gram;
use gpsimplify::transforms::{
    alternating_interior, build_cole_hopf_ode, build_first_order, first_order_truth, growth_ratio,
    norm_growth_diagnostic, OdeForm,
};
use gpsimplify::{fit, ConstraintSystem, KernelSpec, Nugget};
use gpsimplify_cli::config::{Experiment, ExperimentConfig, KernelChoice, TABLE1_SIZES};
use gpsimplify_cli::experiments::{self, cole_hopf_run};
use gpsimplify_cli::table1;
use serde_json::Value;

const NU: f64 = 0.5;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Outcome::new(false, format!("error: {e}"))
    }
}

fn within_factor(value: f64, reference: f64, factor: f64) -> bool {
    value <= reference * factor && value >= reference / factor
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn fixed_theta_trend() -> Outcome {
    let sizes = [25, 50, 100, 200];
    let mut errors = Vec::new();
    let mut slowest = Duration::ZERO;
    for n in sizes {
        let (run, took) = timed(|| cole_hopf_run("burgers-paper", n, NU, OdeForm::Appendix, KernelChoice::Fixed(1.0), None, 1001));
        match run {
            Ok(r) => errors.push(r.relative_l2),
            Err(e) => return Outcome::error(e),
        }
        slowest = slowest.max(took);
    }
    let band = within_factor(errors[0], 1.9232e-2, 10.0) && within_factor(errors[2], 1.3532e-3, 10.0);
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let fast = slowest < Duration::from_secs(5);
    Outcome::new(
        band && decreasing && fast,
        format!("errors {} (N=25,50,100,200), slowest fit {:.3}s", errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" "), slowest.as_secs_f64()),
    )
}

fn learned_theta_trend() -> Outcome {
    let plan = match ExperimentConfig::default().table1_plan() {
        Ok(p) => p,
        Err(e) => return Outcome::error(e),
    };
    let (table, took) = timed(|| table1::compute(&plan));
    let table = match table {
        Ok(t) => t,
        Err(e) => return Outcome::error(e),
    };
    let reference_errors = [2.9675e-4, 7.6794e-5, 1.9450e-5];
    let mut ok = table.rows.len() == TABLE1_SIZES.len();
    let mut detail = Vec::new();
    for (row, reference) in table.rows.iter().take(3).zip(reference_errors) {
        ok &= within_factor(row.learned_error, reference, 10.0) && row.learned_error < row.fixed_error;
        detail.push(format!("N={} θ={:.2} {:.3e} vs fixed {:.3e}", row.n, row.learned_theta, row.learned_error, row.fixed_error));
    }
    ok &= took < Duration::from_secs(600);
    Outcome::new(ok, format!("{}; full table {:.1}s", detail.join(", "), took.as_secs_f64()))
}

fn run_experiment(experiment: Experiment, overrides: &[&str]) -> Result<(gpsimplify_cli::ResultSummary, tempfile::TempDir), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ExperimentConfig::for_experiment(experiment).with_overrides(overrides).map_err(|e| e.to_string())?;
    let summary = experiments::run(&config, dir.path()).map_err(|e| e.to_string())?;
    Ok((summary, dir))
}

fn first_order_map() -> Outcome {
    match run_experiment(Experiment::FirstOrder, &["n=100", "theta=1"]) {
        Ok((s, _)) => {
            let err = s.metrics.relative_l2.unwrap_or(f64::INFINITY);
            Outcome::new(err <= 1e-2, format!("relative L2 {err:.3e}"))
        }
        Err(e) => Outcome::error(e),
    }
}

fn cgc_recovery() -> Outcome {
    let (run, took) = timed(|| run_experiment(Experiment::CgcPde, &[]));
    match run {
        Ok((s, _)) => {
            let a = s.metrics.a_learned.unwrap_or(f64::NAN);
            let ok = (a + 1.0).abs() <= 0.05 && took < Duration::from_secs(120);
            Outcome::new(ok, format!("a_learned {a:.6} (target -1), {:.2}s", took.as_secs_f64()))
        }
        Err(e) => Outcome::error(e),
    }
}

fn normal_form() -> Outcome {
    let (summary, dir) = match run_experiment(Experiment::BrusselatorNf, &[]) {
        Ok(x) => x,
        Err(e) => return Outcome::error(e),
    };
    let mu = 0.1 / 3.99f64.sqrt();
    let radius = summary.metrics.radius_learned.unwrap_or(f64::NAN);
    let rel = summary.metrics.relative_l2.unwrap_or(f64::INFINITY);
    let nf: Value = match std::fs::read_to_string(dir.path().join("normal_form.json")).map(|t| serde_json::from_str(&t)) {
        Ok(Ok(v)) => v,
        _ => return Outcome::new(false, "normal_form.json unreadable"),
    };
    let coeffs: Vec<f64> = nf["h_coeffs"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
    let Ok(coeffs): Result<[f64; 5], _> = coeffs.try_into() else {
        return Outcome::new(false, "normal_form.json lacks five coefficients");
    };
    let h00 = nf_h(&coeffs, 0.0, 0.0);
    let ratio = radius / mu.sqrt();
    let ok = (ratio - 1.0).abs() <= 0.1 && rel <= 0.1 && h00 == 0.0;
    Outcome::new(ok, format!("mean r/√μ {ratio:.6}, relative L2 {rel:.3e}, H(0,0) {h00}"))
}

fn multi_ic() -> Outcome {
    match run_experiment(Experiment::ColeHopfMulti, &[]) {
        Ok((s, _)) => {
            let err = s.metrics.relative_l2.unwrap_or(f64::INFINITY);
            Outcome::new(err <= 1e-2, format!("pooled relative L2 {err:.4e}"))
        }
        Err(e) => Outcome::error(e),
    }
}

// ---- property suite ------------------------------------------------------

type Check = Result<(), String>;
type Suite = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Deterministic points in `[lo, hi)` from a fixed low-discrepancy sequence.
fn spread(k: usize, lo: f64, hi: f64) -> f64 {
    let frac = (k as f64 * 0.618_033_988_749_895 + 0.137).fract();
    lo + (hi - lo) * frac
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
}

fn kernel_derivatives() -> Check {
    for theta in [0.3, 1.0, 4.0] {
        let k = KernelSpec::matern52(theta).map_err(|e| e.to_string())?;
        let h = 1e-5 * theta;
        for i in 0..20 {
            let (x, y) = (spread(i, -2.0, 2.0), spread(i + 50, -2.0, 2.0));
            if (x - y).abs() < 0.05 * theta {
                continue;
            }
            for a in 0..2u8 {
                for b in 0..=2u8 {
                    let d = |x: f64| k.deriv(x, y, a, b).unwrap();
                    let fd = (d(x + h) - d(x - h)) / (2.0 * h);
                    let exact = k.deriv(x, y, a + 1, b).map_err(|e| e.to_string())?;
                    ensure(close_rel(exact, fd, 1e-5), || format!("θ={theta} ∂^({},{b}) at ({x},{y}): {exact} vs {fd}", a + 1))?;
                }
            }
        }
    }
    Ok(())
}

fn burgers_system(n: usize) -> Result<ConstraintSystem, String> {
    let (_, us) = ic::lookup("burgers-paper").and_then(|c| c.sample(n, NU)).map_err(|e| e.to_string())?;
    build_cole_hopf_ode(&us, NU, OdeForm::Appendix).map_err(|e| e.to_string())
}

fn gram_structure() -> Check {
    let system = burgers_system(40)?;
    let k = KernelSpec::matern52(0.7).unwrap();
    let g = assemble_gram(system.functionals(), &k).map_err(|e| e.to_string())?;
    let m = g.nrows();
    let scale = (0..m).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..m {
        for j in 0..i {
            ensure((g[(i, j)] - g[(j, i)]).abs() <= 1e-12 * scale, || format!("asymmetric at ({i},{j})"))?;
        }
    }
    for trial in 0..20 {
        let v: Vec<f64> = (0..m).map(|i| spread(i + 97 * trial, -1.0, 1.0)).collect();
        let mut q = 0.0;
        for i in 0..m {
            for j in 0..m {
                q += v[i] * g[(i, j)] * v[j];
            }
        }
        let vv: f64 = v.iter().map(|x| x * x).sum();
        ensure(q >= -1e-10 * scale * vv, || format!("negative quadratic form {q}"))?;
    }
    Ok(())
}

fn representer_residual() -> Check {
    let k = KernelSpec::matern52(1.0).unwrap();
    for n in [20, 60] {
        let system = burgers_system(n)?;
        let interp = fit(&system, &k).map_err(|e| e.to_string())?;
        let alpha_max = interp.coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        for (f, &y) in system.functionals().iter().zip(system.targets()) {
            let r = (interp.apply(f).map_err(|e| e.to_string())? - y).abs();
            ensure(r <= 10.0 * interp.nugget * alpha_max + 1e-12, || format!("residual {r} vs λ‖α‖∞ {}", interp.nugget * alpha_max))?;
        }
    }
    Ok(())
}

fn scaling_linearity() -> Check {
    let system = burgers_system(30)?.with_nugget(Nugget::Fixed(1e-8)).map_err(|e| e.to_string())?;
    let k = KernelSpec::matern52(1.0).unwrap();
    let base = fit(&system, &k).map_err(|e| e.to_string())?;
    let c = -3.7;
    let scaled_targets: Vec<f64> = system.targets().iter().map(|y| c * y).collect();
    let scaled = system.clone().with_targets(scaled_targets).map_err(|e| e.to_string())?;
    let interp = fit(&scaled, &k).map_err(|e| e.to_string())?;
    for i in 0..25 {
        let u = spread(i, 0.0, 1.0);
        let (a, b) = (interp.evaluate(u, 0).unwrap(), c * base.evaluate(u, 0).unwrap());
        ensure((a - b).abs() <= 1e-9 * b.abs().max(1.0), || format!("scaling broke at u={u}: {a} vs {b}"))?;
    }
    Ok(())
}

fn loo_properties() -> Check {
    let system = burgers_system(25)?;
    for theta in [0.1, 1.0, 10.0] {
        let rho = rho_loo(&system, &KernelSpec::matern52(theta).unwrap()).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&rho), || format!("ρ_loo {rho} at θ={theta}"))?;
    }
    let config = ThetaSearchConfig::default();
    let base = learn_theta(&config, &system, KernelSpec::matern52).map_err(|e| e.to_string())?;
    let scaled = system.clone().with_targets(system.targets().iter().map(|y| 7.5 * y).collect()).map_err(|e| e.to_string())?;
    let other = learn_theta(&config, &scaled, KernelSpec::matern52).map_err(|e| e.to_string())?;
    ensure(close_rel(base.theta, other.theta, 1e-6), || format!("θ* moved under scaling: {} vs {}", base.theta, other.theta))
}

fn time_steppers() -> Check {
    // explicit Euler on Burgers against a fine-step reference
    let ic = ic::lookup("burgers-paper").map_err(|e| e.to_string())?;
    let grid = Grid1D::spanning(0.0, 1.0, 26).unwrap();
    let v0 = Field1D::from_fn(grid, |x| (ic.value)(x, NU));
    let horizon = 0.004;
    let march = |h: f64| -> Field1D {
        let mut v = v0.clone();
        for _ in 0..(horizon / h).round() as usize {
            v = pde_step(PdeKind::Burgers { nu: NU }, &v, h).unwrap().field;
        }
        v
    };
    let reference = march(horizon / 4000.0);
    let err = |v: &Field1D| v.values.iter().zip(&reference.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let euler = err(&march(horizon / 20.0)) / err(&march(horizon / 40.0));
    ensure((1.8..=2.2).contains(&euler), || format!("Euler ratio {euler}"))?;

    let rk_err = |dt: f64| {
        let t = rk4(|_, y: &[f64], out: &mut [f64]| out[0] = -2.0 * y[0] + y[0].sin(), &[1.0], 0.0, 1.0, dt).unwrap();
        t.last().unwrap()[0]
    };
    let fine = rk_err(1e-4);
    let ratio = (rk_err(0.1) - fine).abs() / (rk_err(0.05) - fine).abs();
    ensure((12.8..=19.2).contains(&ratio), || format!("RK4 ratio {ratio}"))?;

    let mu = 0.05;
    let hopf = HopfNormalForm { mu };
    let traj = rk4(|_, y: &[f64], out: &mut [f64]| out.copy_from_slice(&hopf.cartesian_rhs(y[0], y[1])), &[0.1, -0.1], 0.0, 50.0, 1e-2)
        .map_err(|e| e.to_string())?;
    let r0 = 0.1f64.hypot(0.1);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let gap = (s[0].hypot(s[1]) - r_exact(r0, mu, *t)).abs();
        ensure(gap <= 1e-6, || format!("r_exact gap {gap} at t={t}"))?;
    }
    Ok(())
}

fn truth_oracles() -> Check {
    // closed-form derivatives, kept separate from the library
    let k = 1.0 / (2.0 * NU);
    let denom = 1.0 - (-k).exp();
    let d = |u: f64, order: u8| match order {
        0 => ((-k * u).exp() - (-k).exp()) / denom,
        1 => -k * (-k * u).exp() / denom,
        _ => k * k * (-k * u).exp() / denom,
    };
    let system = burgers_system(200)?;
    for (f, &y) in system.functionals().iter().zip(system.targets()) {
        let r = (f.apply(d) - y).abs();
        ensure(r <= 1e-12, || format!("Cole-Hopf residual {r}"))?;
    }
    let g = |u: f64, order: u8| {
        let base = first_order_truth(u);
        match order {
            0 => base,
            1 => u * u * base,
            _ => (2.0 * u + u.powi(4)) * base,
        }
    };
    let (_, us) = ic::lookup("firstorder-paper").and_then(|c| c.sample(200, 0.0)).map_err(|e| e.to_string())?;
    let system = build_first_order(&us).map_err(|e| e.to_string())?;
    for (f, &y) in system.functionals().iter().zip(system.targets()) {
        let r = (f.apply(g) - y).abs();
        ensure(r <= 1e-12, || format!("first-order residual {r}"))?;
    }
    Ok(())
}

fn cgc_gradients() -> Check {
    let (_, us) = ic::lookup("firstorder-paper").and_then(|c| c.sample(12, 0.0)).map_err(|e| e.to_string())?;
    for (squared, free_z) in [(true, false), (false, true)] {
        let p = CgcPdeProblem::new(
            us.clone(),
            KernelSpec::matern52(1.0).unwrap(),
            1.0,
            LossWeights { data: 10.0, ode: 3.0, anchor: 5.0 },
            1e-6,
            squared,
            free_z,
        )
        .map_err(|e| e.to_string())?;
        let s = CgcPdeState::from_fn(&p, |u| (u + 0.2).sin() + 1.5, -0.4);
        let (_, g) = cgc_pde_gradient(&p, &s).map_err(|e| e.to_string())?;
        let fd = |bump: &dyn Fn(&mut CgcPdeState, f64)| {
            let h = 1e-4;
            let (mut a, mut b) = (s.clone(), s.clone());
            bump(&mut a, h);
            bump(&mut b, -h);
            (cgc_pde_loss(&p, &a).unwrap().total - cgc_pde_loss(&p, &b).unwrap().total) / (2.0 * h)
        };
        let da = fd(&|s, h| s.a += h);
        ensure(close_rel(g.a, da, 1e-5), || format!("∂a {} vs {da}", g.a))?;
        for j in [0, 4, p.nodes().len() - 1] {
            let dg = fd(&|s, h| s.g_values[j] += h);
            ensure(close_rel(g.g_values[j], dg, 1e-5), || format!("∂g[{j}] {} vs {dg}", g.g_values[j]))?;
        }
    }
    Ok(())
}

fn norm_growth() -> Check {
    let k = KernelSpec::matern52(1.0).unwrap();
    let consistent = norm_growth_diagnostic(|n| burgers_system(n).map_err(gpsimplify::Error::InvalidInput), &[100, 400], &k, None)
        .map_err(|e| e.to_string())?;
    let inconsistent = norm_growth_diagnostic(
        |n| burgers_system(n).map_err(gpsimplify::Error::InvalidInput).and_then(alternating_interior),
        &[100, 400],
        &k,
        None,
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (growth_ratio(&consistent).unwrap_or(f64::NAN), growth_ratio(&inconsistent).unwrap_or(f64::NAN));
    ensure(a <= 1.5 && b >= 4.0, || format!("growth ratios {a} (consistent) vs {b} (inconsistent)"))
}

fn property_suites() -> Outcome {
    let checks: [Suite; 9] = [
        ("kernel derivatives", kernel_derivatives),
        ("gram symmetry/PSD", gram_structure),
        ("representer residual", representer_residual),
        ("target scaling", scaling_linearity),
        ("rho_loo range and θ* invariance", loo_properties),
        ("Euler/RK4 orders and r_exact", time_steppers),
        ("truth oracles", truth_oracles),
        ("CGC gradients", cgc_gradients),
        ("norm growth separation", norm_growth),
    ];
    let (results, took) = timed(|| checks.iter().map(|(name, check)| (*name, check())).collect::<Vec<_>>());
    let failed: Vec<String> = results.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    let ok = failed.is_empty() && took < Duration::from_secs(60);
    let detail = if failed.is_empty() {
        format!("{} suites in {:.2}s", checks.len(), took.as_secs_f64())
    } else {
        format!("{} in {:.2}s", failed.join("; "), took.as_secs_f64())
    };
    Outcome::new(ok, detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 error-table trend, fixed θ", fixed_theta_trend),
        ("2 error-table trend, learned θ", learned_theta_trend),
        ("3 first-order map", first_order_map),
        ("4 CGC coefficient recovery", cgc_recovery),
        ("5 normal form", normal_form),
        ("6 multi-IC Cole-Hopf", multi_ic),
        ("7 property suites", property_suites),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = check();
        if !outcome.pass {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
