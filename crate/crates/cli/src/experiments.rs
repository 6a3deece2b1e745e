//! One function per experiment. Each one writes its artifacts into the
//! output directory and fills in the metrics of the summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpsimplify::cgc::{
    cgc_pde_solve, nf_h, nf_solve, CgcPdeProblem, CgcPdeState, LossWeights, NfProblem, NfSolveConfig, NfState,
    SolveConfig,
};
use gpsimplify::dynamics::{antiderivative, ic, pde_step, r_exact, rk4_sampled, Brusselator, Field1D, Grid1D, PdeKind};
use gpsimplify::learning::{learn_theta, ThetaSearchConfig};
use gpsimplify::optim::{DescentConfig, StopReason};
use gpsimplify::regression::rkhs_norm_sq;
use gpsimplify::transforms::{
    alternating_interior, anchor_interval, build_cole_hopf_discrete, build_cole_hopf_multi, build_cole_hopf_ode,
    build_first_order, cole_hopf_truth, first_order_truth, growth_ratio, norm_growth_diagnostic, relative_l2,
    relative_l2_values, OdeForm,
};
use gpsimplify::{fit, ConstraintSystem, Interpolant, KernelSpec, Nugget};
use serde::Serialize;
use serde_json::Value;

use crate::config::{
    CgcPlan, ColeHopfPlan, DiscretePlan, ExperimentConfig, FirstOrderPlan, KernelChoice, MultiPlan, NfPlan, NormPlan,
    Plan,
};
use crate::error::{CliError, CliResult};
use crate::output::{write_json, CsvFile};
use crate::summary::{Metrics, ResultSummary};

/// Side length of the `(u, v, H)` grid written for the normal form.
const SURFACE_GRID: usize = 41;

/// Validates `config`, runs it and writes every artifact plus
/// `summary.json` into `out_dir`. Nothing touches the disk when validation
/// fails.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> CliResult<ResultSummary> {
    let plan = config.plan()?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let start = Instant::now();
    let mut report = Report::new(out_dir);
    match &plan {
        Plan::ColeHopf(p) => cole_hopf(p, &mut report)?,
        Plan::ColeHopfDiscrete(p) => cole_hopf_discrete(p, &mut report)?,
        Plan::ColeHopfMulti(p) => cole_hopf_multi(p, &mut report)?,
        Plan::FirstOrder(p) => first_order(p, &mut report)?,
        Plan::CgcPde(p) => cgc_pde(p, &mut report)?,
        Plan::BrusselatorNf(p) => brusselator_nf(p, &mut report)?,
        Plan::DiagnoseNorm(p) => diagnose_norm(p, &mut report)?,
    }
    report.metrics.wall_time_s = start.elapsed().as_secs_f64();
    let mut parameters = serde_json::to_value(&plan).expect("plan serializes");
    if let Value::Object(map) = &mut parameters {
        map.insert("seed".into(), config.seed.map_or(Value::Null, Value::from));
        map.extend(report.extra_parameters);
    }
    let summary = ResultSummary {
        experiment: plan.experiment().to_string(),
        parameters,
        metrics: report.metrics,
        artifacts: report.artifacts,
        warnings: report.warnings,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

struct Report {
    dir: PathBuf,
    metrics: Metrics,
    artifacts: BTreeMap<String, String>,
    warnings: Vec<String>,
    extra_parameters: serde_json::Map<String, Value>,
}

impl Report {
    fn new(dir: &Path) -> Self {
        Report {
            dir: dir.to_path_buf(),
            metrics: Metrics::default(),
            artifacts: BTreeMap::new(),
            warnings: Vec::new(),
            extra_parameters: serde_json::Map::new(),
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn record(&mut self, name: &str, path: PathBuf) {
        self.artifacts.insert(name.to_string(), path.display().to_string());
    }

    fn json<T: Serialize>(&mut self, name: &str, file: &str, value: &T) -> CliResult<()> {
        let path = write_json(&self.path(file), value)?;
        self.record(name, path);
        Ok(())
    }

    fn trace(&mut self, trace: &[f64]) -> CliResult<()> {
        let mut csv = CsvFile::create(&self.path("trace.csv"), &["iteration", "loss"])?;
        for (k, &v) in trace.iter().enumerate() {
            csv.row(&[k as f64, v])?;
        }
        let path = csv.finish()?;
        self.record("trace", path);
        Ok(())
    }
}

fn reason_name(reason: StopReason) -> String {
    serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// A fit under either a fixed or a learned lengthscale.
#[derive(Debug, Clone)]
pub struct LearnedFit {
    pub interpolant: Interpolant,
    pub theta: f64,
    pub rho: Option<f64>,
    pub kernel: KernelSpec,
}

pub fn fit_with(system: &ConstraintSystem, choice: KernelChoice, nugget: Option<f64>) -> CliResult<LearnedFit> {
    let system = match nugget {
        Some(l) => system.clone().with_nugget(Nugget::Fixed(l))?,
        None => system.clone(),
    };
    let (theta, rho) = match choice {
        KernelChoice::Fixed(t) => (t, None),
        KernelChoice::Learned => {
            let search = learn_theta(&ThetaSearchConfig::default(), &system, KernelSpec::matern52)?;
            (search.theta, Some(search.rho))
        }
    };
    let kernel = KernelSpec::matern52(theta)?;
    let interpolant = fit(&system, &kernel)?;
    Ok(LearnedFit { interpolant, theta, rho, kernel })
}

fn record_fit(report: &mut Report, system: &ConstraintSystem, choice: KernelChoice, nugget: Option<f64>, f: &LearnedFit) -> CliResult<()> {
    let system = match nugget {
        Some(l) => system.clone().with_nugget(Nugget::Fixed(l))?,
        None => system.clone(),
    };
    report.metrics.rkhs_norm = Some(rkhs_norm_sq(&system, &f.kernel)?.max(0.0).sqrt());
    if choice == KernelChoice::Learned {
        report.metrics.theta_learned = Some(f.theta);
        report.metrics.rho = f.rho;
    }
    report.json("interpolant", "interpolant.json", &f.interpolant)
}

/// Samples of one initial condition and the fitted Cole-Hopf map.
#[derive(Debug, Clone)]
pub struct ColeHopfRun {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub system: ConstraintSystem,
    pub fit: LearnedFit,
    pub eval_points: Vec<f64>,
    pub relative_l2: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn cole_hopf_run(
    ic_name: &str,
    n: usize,
    nu: f64,
    form: OdeForm,
    choice: KernelChoice,
    nugget: Option<f64>,
    eval_points: usize,
) -> CliResult<ColeHopfRun> {
    let (xs, us) = ic::lookup(ic_name)?.sample(n, nu)?;
    let system = build_cole_hopf_ode(&us, nu, form)?;
    let fit = fit_with(&system, choice, nugget)?;
    let eval_points = anchor_interval(eval_points)?;
    let relative_l2 = relative_l2(&fit.interpolant, |u| cole_hopf_truth(u, nu), &eval_points)?;
    Ok(ColeHopfRun { xs, us, system, fit, eval_points, relative_l2 })
}

/// `(x, u, truth, learned, |error|)` rows.
fn write_map_samples(
    report: &mut Report,
    file: &str,
    header: &[&str; 5],
    xs: &[f64],
    us: &[f64],
    learned: &Interpolant,
    truth: impl Fn(f64) -> f64,
) -> CliResult<()> {
    let values = learned.evaluate_many(us, 0)?;
    let mut csv = CsvFile::create(&report.path(file), header)?;
    for ((&x, &u), &d) in xs.iter().zip(us).zip(&values) {
        let t = truth(u);
        csv.row(&[x, u, t, d, (d - t).abs()])?;
    }
    let path = csv.finish()?;
    report.record("samples", path);
    Ok(())
}

/// `(u, truth, learned, |error|)` on the evaluation grid.
fn write_curve(report: &mut Report, points: &[f64], learned: &Interpolant, truth: impl Fn(f64) -> f64) -> CliResult<()> {
    let values = learned.evaluate_many(points, 0)?;
    let mut csv = CsvFile::create(&report.path("curve.csv"), &["u", "w_true", "w_learned", "abs_err"])?;
    for (&u, &d) in points.iter().zip(&values) {
        let t = truth(u);
        csv.row(&[u, t, d, (d - t).abs()])?;
    }
    let path = csv.finish()?;
    report.record("curve", path);
    Ok(())
}

const COLE_HOPF_HEADER: [&str; 5] = ["x", "u", "w_true", "w_learned", "abs_err"];

fn cole_hopf(p: &ColeHopfPlan, report: &mut Report) -> CliResult<()> {
    let run = cole_hopf_run(&p.ic, p.n, p.nu, p.ode_form, p.kernel, p.nugget, p.eval_points)?;
    let nu = p.nu;
    report.metrics.relative_l2 = Some(run.relative_l2);
    record_fit(report, &run.system, p.kernel, p.nugget, &run.fit)?;
    write_map_samples(report, "cole_hopf.csv", &COLE_HOPF_HEADER, &run.xs, &run.us, &run.fit.interpolant, |u| {
        cole_hopf_truth(u, nu)
    })?;
    write_curve(report, &run.eval_points, &run.fit.interpolant, |u| cole_hopf_truth(u, nu))
}

fn cole_hopf_discrete(p: &DiscretePlan, report: &mut Report) -> CliResult<()> {
    let init = ic::lookup(&p.ic)?;
    let grid = Grid1D::spanning(init.domain.0, init.domain.1, p.n + 2)?;
    let v0 = Field1D::from_fn(grid, |x| (init.value)(x, p.nu));
    let step = pde_step(PdeKind::Burgers { nu: p.nu }, &v0, p.h)?;
    if step.cfl_warning {
        report.warnings.push(format!(
            "h·ν/dx² = {:.3} exceeds the explicit stability limit; the discrete constraints may be inaccurate",
            step.cfl_ratio.unwrap_or(f64::NAN)
        ));
    }
    let system = build_cole_hopf_discrete(&v0, p.nu, p.h)?;
    let fitted = fit_with(&system, p.kernel, p.nugget)?;
    let nu = p.nu;
    let points = anchor_interval(p.eval_points)?;
    report.metrics.relative_l2 = Some(relative_l2(&fitted.interpolant, |u| cole_hopf_truth(u, nu), &points)?);
    record_fit(report, &system, p.kernel, p.nugget, &fitted)?;
    report.extra_parameters.insert("dx".into(), Value::from(grid.dx));
    let u0 = antiderivative(&v0, 0.0, grid.x0)?;
    write_map_samples(
        report,
        "cole_hopf.csv",
        &COLE_HOPF_HEADER,
        &grid.points(),
        &u0.values,
        &fitted.interpolant,
        |u| cole_hopf_truth(u, nu),
    )?;
    write_curve(report, &points, &fitted.interpolant, |u| cole_hopf_truth(u, nu))
}

fn cole_hopf_multi(p: &MultiPlan, report: &mut Report) -> CliResult<()> {
    let system = build_cole_hopf_multi(&ic::MULTI_IC_NAMES, p.points_per_ic, p.nu, p.ode_form)?;
    let fitted = fit_with(&system, p.kernel, p.nugget)?;
    let nu = p.nu;
    let mut csv = CsvFile::create(&report.path("cole_hopf_multi.csv"), &["ic", "x", "u", "w_true", "w_learned", "abs_err"])?;
    let (mut all_learned, mut all_truth) = (Vec::new(), Vec::new());
    for name in ic::MULTI_IC_NAMES {
        let (xs, us) = ic::lookup(name)?.sample(p.points_per_ic, nu)?;
        let values = fitted.interpolant.evaluate_many(&us, 0)?;
        for ((&x, &u), &d) in xs.iter().zip(&us).zip(&values) {
            let t = cole_hopf_truth(u, nu);
            csv.labeled_row(name, &[x, u, t, d, (d - t).abs()])?;
            all_learned.push(d);
            all_truth.push(t);
        }
    }
    let path = csv.finish()?;
    report.record("samples", path);
    report.metrics.relative_l2 = Some(relative_l2_values(&all_learned, &all_truth)?);
    record_fit(report, &system, p.kernel, p.nugget, &fitted)
}

fn first_order(p: &FirstOrderPlan, report: &mut Report) -> CliResult<()> {
    let (xs, us) = ic::lookup(&p.ic)?.sample(p.n, 0.0)?;
    let system = build_first_order(&us)?;
    let fitted = fit_with(&system, p.kernel, p.nugget)?;
    report.metrics.relative_l2 = Some(relative_l2(&fitted.interpolant, first_order_truth, &us)?);
    record_fit(report, &system, p.kernel, p.nugget, &fitted)?;
    write_map_samples(
        report,
        "first_order.csv",
        &["x", "u", "g_true", "g_learned", "abs_err"],
        &xs,
        &us,
        &fitted.interpolant,
        first_order_truth,
    )
}

fn cgc_pde(p: &CgcPlan, report: &mut Report) -> CliResult<()> {
    let (_, us) = ic::lookup(&p.ic)?.sample(p.n, 0.0)?;
    let unit = LossWeights { data: 1.0, ode: 1.0, anchor: 1.0 };
    let problem = CgcPdeProblem::new(us.clone(), KernelSpec::matern52(p.theta)?, p.gamma, unit, p.nugget, p.l2_squared, p.free_z)?;
    let init = CgcPdeState::identity(&problem);
    let weights = match p.weights {
        Some(w) => w,
        None => problem.balanced_weights(&init)?,
    };
    let problem = problem.with_weights(weights)?;
    report.extra_parameters.insert("weights_used".into(), serde_json::to_value(weights).expect("weights serialize"));
    let config = SolveConfig {
        optimizer: p.optimizer,
        descent: DescentConfig { max_iters: p.max_iters, ..DescentConfig::default() },
        ..SolveConfig::default()
    };
    let sol = cgc_pde_solve(&problem, &init, &config)?;
    let learned = sol.interpolant.evaluate_many(&us, 0)?;
    let truth: Vec<f64> = us.iter().map(|&u| first_order_truth(u)).collect();
    let m = &mut report.metrics;
    m.a_learned = Some(sol.state.a);
    m.loss_final = Some(sol.terms.total);
    m.rkhs_norm = Some(sol.terms.norm.max(0.0).sqrt());
    m.iterations = Some(sol.iterations);
    m.stop_reason = Some(reason_name(sol.reason));
    m.relative_l2 = Some(relative_l2_values(&learned, &truth)?);
    let mut csv = CsvFile::create(&report.path("cgc.csv"), &["u", "G_learned", "G_truth"])?;
    for ((&u, &g), &t) in us.iter().zip(&learned).zip(&truth) {
        csv.row(&[u, g, t])?;
    }
    let path = csv.finish()?;
    report.record("samples", path);
    report.trace(&sol.trace)?;
    report.json("interpolant", "interpolant.json", &sol.interpolant)
}

#[derive(Serialize)]
struct NfArtifact<'a> {
    mu: f64,
    h_coeffs: &'a [f64; 5],
    theta0: f64,
}

fn brusselator_nf(p: &NfPlan, report: &mut Report) -> CliResult<()> {
    let system = Brusselator::new(p.a, p.b)?;
    let mu = system.mu()?;
    let traj = rk4_sampled(|t, y, out| system.rhs_into(t, y, out), &p.initial, 0.0, p.dt, p.stride, p.samples)?;
    let problem = NfProblem::new(traj.clone(), mu, p.weights, p.initial)?;
    let init = NfState::initial(&problem)?;
    let defaults = NfSolveConfig::default();
    let config = NfSolveConfig {
        optimizer: p.optimizer,
        descent: DescentConfig { max_iters: p.max_iters, ..defaults.descent },
        theta0: p.initial[1].atan2(p.initial[0]),
        ..defaults
    };
    let sol = nf_solve(&problem, &init, &config)?;
    let r0 = p.initial[0].hypot(p.initial[1]);
    let exact: Vec<f64> = traj.times.iter().map(|&t| r_exact(r0, mu, t)).collect();
    // limit-cycle statistics over the second half of the horizon
    let t_last = *traj.times.last().expect("at least 3 samples");
    let late: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= 0.5 * (t_last + traj.times[1] - traj.times[0])).collect();
    let late_r: Vec<f64> = late.iter().map(|&i| sol.state.r_values[i]).collect();
    let late_exact: Vec<f64> = late.iter().map(|&i| exact[i]).collect();
    let m = &mut report.metrics;
    m.radius_learned = Some(late_r.iter().sum::<f64>() / late_r.len() as f64);
    m.relative_l2 = Some(relative_l2_values(&late_r, &late_exact)?);
    m.loss_final = Some(sol.terms.total);
    m.rkhs_norm = Some(sol.terms.norm.max(0.0).sqrt());
    m.iterations = Some(sol.iterations);
    m.stop_reason = Some(reason_name(sol.reason));
    report.extra_parameters.insert("mu".into(), Value::from(mu));

    let mut csv = CsvFile::create(&report.path("nf.csv"), &["t", "u", "v", "r_learned", "r_exact", "x_rec", "y_rec"])?;
    for (i, (s, rec)) in traj.states.iter().zip(&sol.reconstruction.states).enumerate() {
        csv.row(&[traj.times[i], s[0], s[1], sol.state.r_values[i], exact[i], rec[0], rec[1]])?;
    }
    let path = csv.finish()?;
    report.record("trajectory", path);

    let (us, vs) = (traj.component(0), traj.component(1));
    let bounds = |xs: &[f64]| xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let ((u_lo, u_hi), (v_lo, v_hi)) = (bounds(&us), bounds(&vs));
    let mut csv = CsvFile::create(&report.path("h_surface.csv"), &["u", "v", "H"])?;
    let last = (SURFACE_GRID - 1) as f64;
    for i in 0..SURFACE_GRID {
        let u = u_lo + (u_hi - u_lo) * i as f64 / last;
        for j in 0..SURFACE_GRID {
            let v = v_lo + (v_hi - v_lo) * j as f64 / last;
            csv.row(&[u, v, nf_h(&sol.state.h_coeffs, u, v)])?;
        }
    }
    let path = csv.finish()?;
    report.record("h_surface", path);
    report.trace(&sol.trace)?;
    report.json("normal_form", "normal_form.json", &NfArtifact { mu, h_coeffs: &sol.state.h_coeffs, theta0: config.theta0 })
}

fn diagnose_norm(p: &NormPlan, report: &mut Report) -> CliResult<()> {
    let init = ic::lookup(&p.ic)?;
    let builder = |n: usize| -> gpsimplify::Result<ConstraintSystem> {
        let (_, us) = init.sample(n, p.nu)?;
        let system = build_cole_hopf_ode(&us, p.nu, p.ode_form)?;
        if p.inconsistent {
            alternating_interior(system)
        } else {
            Ok(system)
        }
    };
    let samples = norm_growth_diagnostic(builder, &p.counts, &KernelSpec::matern52(p.theta)?, p.nugget)?;
    let mut csv = CsvFile::create(&report.path("norms.csv"), &["n", "norm"])?;
    for s in &samples {
        csv.row(&[s.n as f64, s.norm])?;
    }
    let path = csv.finish()?;
    report.record("norms", path);
    report.metrics.growth_ratio = growth_ratio(&samples);
    report.metrics.rkhs_norm = samples.last().map(|s| s.norm);
    Ok(())
}
