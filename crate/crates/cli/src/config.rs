//! Run configuration: one flat JSON document, overridable from the command
//! line, resolved into a typed plan with per-experiment defaults.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use gpsimplify::cgc::{CgcOptimizer, LossWeights, NfOptimizer};
use gpsimplify::dynamics::ic;
use gpsimplify::transforms::{OdeForm, ANCHOR_INTERVAL_POINTS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Environment variable consulted for the output directory.
pub const OUTPUT_DIR_ENV: &str = "GPSIMPLIFY_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "gpsimplify-output";
/// Sample counts accepted by the table command.
pub const TABLE1_SIZES: [usize; 6] = [25, 50, 100, 200, 400, 800];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ColeHopf,
    ColeHopfDiscrete,
    ColeHopfMulti,
    FirstOrder,
    CgcPde,
    BrusselatorNf,
    DiagnoseNorm,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::ColeHopf,
        Experiment::ColeHopfDiscrete,
        Experiment::ColeHopfMulti,
        Experiment::FirstOrder,
        Experiment::CgcPde,
        Experiment::BrusselatorNf,
        Experiment::DiagnoseNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ColeHopf => "cole-hopf",
            Experiment::ColeHopfDiscrete => "cole-hopf-discrete",
            Experiment::ColeHopfMulti => "cole-hopf-multi",
            Experiment::FirstOrder => "first-order",
            Experiment::CgcPde => "cgc-pde",
            Experiment::BrusselatorNf => "brusselator-nf",
            Experiment::DiagnoseNorm => "diagnose-norm",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every field is optional in the file; missing values take the defaults of
/// the selected experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub n: Option<usize>,
    pub nu: Option<f64>,
    pub theta: Option<f64>,
    pub learn_kernel: Option<bool>,
    pub nugget: Option<f64>,
    pub h: Option<f64>,
    pub dx: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub gamma: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub dt: Option<f64>,
    pub samples: Option<usize>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub ic: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub ode_form: Option<OdeForm>,
    pub optimizer: Option<String>,
    pub max_iters: Option<usize>,
    pub l2_squared: Option<bool>,
    pub free_z: Option<bool>,
    pub eval_points: Option<usize>,
    pub counts: Option<Vec<usize>>,
    pub inconsistent: Option<bool>,
    pub n_list: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        ExperimentConfig { experiment: Some(experiment), ..Default::default() }
    }

    pub fn from_json(text: &str, origin: &Path) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|source| CliError::Json { path: origin.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text, path)
    }

    /// Applies `key=value` overrides. The value is read as JSON when it
    /// parses, otherwise as a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> CliResult<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("config serializes");
        let map = doc.as_object_mut().expect("config is an object");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("override '{item}' is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            map.insert(key.trim().replace('-', "_"), value);
        }
        serde_json::from_value(doc).map_err(|e| CliError::Validation(format!("override rejected: {e}")))
    }

    /// Resolves defaults and validates every parameter of the experiment.
    pub fn plan(&self) -> CliResult<Plan> {
        let experiment = self
            .experiment
            .ok_or_else(|| CliError::Validation("missing 'experiment'".into()))?;
        self.reject_foreign(experiment)?;
        let plan = match experiment {
            Experiment::ColeHopf => Plan::ColeHopf(ColeHopfPlan {
                n: self.count("n", 25)?,
                nu: self.positive("nu", 0.5)?,
                kernel: self.kernel_choice()?,
                nugget: self.optional_positive("nugget")?,
                ic: self.ic_name("burgers-paper")?,
                ode_form: self.ode_form.unwrap_or_default(),
                eval_points: self.eval_points()?,
            }),
            Experiment::ColeHopfDiscrete => {
                let n = match (self.n, self.dx) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Validation("give either 'n' or 'dx' for the discrete grid, not both".into()))
                    }
                    (_, Some(dx)) => {
                        let dx = positive_value("dx", dx)?;
                        let cells = (1.0 / dx).round();
                        if cells < 4.0 || ((1.0 / dx) - cells).abs() > 1e-9 * cells {
                            return Err(CliError::Validation(format!("dx = {dx} must divide the unit interval into at least 4 cells")));
                        }
                        cells as usize - 1
                    }
                    _ => self.count("n", 100)?,
                };
                if n < 3 {
                    return Err(CliError::Validation(format!("the discrete system needs at least 3 interior points, got {n}")));
                }
                Plan::ColeHopfDiscrete(DiscretePlan {
                    n,
                    nu: self.positive("nu", 0.5)?,
                    h: self.positive("h", 1e-5)?,
                    kernel: self.kernel_choice()?,
                    nugget: self.optional_positive("nugget")?,
                    ic: self.ic_name("burgers-paper")?,
                    eval_points: self.eval_points()?,
                })
            }
            Experiment::ColeHopfMulti => Plan::ColeHopfMulti(MultiPlan {
                points_per_ic: self.count("n", 101)?,
                nu: self.positive("nu", 0.5)?,
                kernel: self.kernel_choice()?,
                nugget: self.optional_positive("nugget")?,
                ode_form: self.ode_form.unwrap_or_default(),
            }),
            Experiment::FirstOrder => Plan::FirstOrder(FirstOrderPlan {
                n: self.count("n", 100)?,
                kernel: self.kernel_choice()?,
                nugget: self.optional_positive("nugget")?,
                ic: self.ic_name("firstorder-paper")?,
            }),
            Experiment::CgcPde => {
                let weights = match (self.lambda1, self.lambda2, self.lambda3) {
                    (None, None, None) => None,
                    (Some(data), Some(ode), Some(anchor)) => {
                        let w = LossWeights { data, ode, anchor };
                        w.validate()?;
                        Some(w)
                    }
                    _ => return Err(CliError::Validation("give all of lambda1, lambda2, lambda3 or none".into())),
                };
                let optimizer = match self.optimizer.as_deref() {
                    None => CgcOptimizer::default(),
                    Some(name) => parse_enum(name, "cgc optimizer")?,
                };
                let l2_squared = self.l2_squared.unwrap_or(true);
                let free_z = self.free_z.unwrap_or(false);
                if optimizer == CgcOptimizer::VariableProjection && (free_z || !l2_squared) {
                    return Err(CliError::Validation(
                        "variable_projection needs l2_squared = true and free_z = false".into(),
                    ));
                }
                Plan::CgcPde(CgcPlan {
                    n: self.count("n", 100)?,
                    theta: self.positive("theta", 1.0)?,
                    gamma: self.positive("gamma", 1.0)?,
                    nugget: self.positive("nugget", 1e-6)?,
                    weights,
                    optimizer,
                    max_iters: self.count("max_iters", 100_000)?,
                    l2_squared,
                    free_z,
                    ic: self.ic_name("firstorder-paper")?,
                })
            }
            Experiment::BrusselatorNf => {
                let samples = self.count("samples", 2000)?;
                let t_end = self.positive("t_end", 200.0)?;
                let dt = self.positive("dt", 1e-3)?;
                let spacing = t_end / samples as f64;
                let stride = (spacing / dt).round();
                if stride < 1.0 || (spacing / dt - stride).abs() > 1e-6 * stride {
                    return Err(CliError::Validation(format!(
                        "sample spacing t_end/samples = {spacing} must be a whole multiple of dt = {dt}"
                    )));
                }
                if samples < 3 {
                    return Err(CliError::Validation("need at least 3 trajectory samples".into()));
                }
                let nugget = self.positive("nugget", 1e-2)?;
                let defaults = gpsimplify::cgc::NfProblem::default_weights(nugget);
                let weights = LossWeights {
                    data: self.positive("lambda1", defaults.data)?,
                    ode: self.positive("lambda2", defaults.ode)?,
                    anchor: self.positive("lambda3", defaults.anchor)?,
                };
                let optimizer = match self.optimizer.as_deref() {
                    None => NfOptimizer::default(),
                    Some(name) => parse_enum(name, "normal-form optimizer")?,
                };
                Plan::BrusselatorNf(NfPlan {
                    a: self.finite("a", 1.0)?,
                    b: self.finite("b", 2.1)?,
                    dt,
                    stride: stride as usize,
                    samples,
                    nugget,
                    weights,
                    optimizer,
                    max_iters: self.count("max_iters", 100_000)?,
                    initial: [0.1, -0.1],
                })
            }
            Experiment::DiagnoseNorm => {
                let counts = self.counts.clone().unwrap_or_else(|| vec![100, 400]);
                if counts.is_empty() || counts.contains(&0) {
                    return Err(CliError::Validation("counts must be a nonempty list of positive sizes".into()));
                }
                if counts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::Validation("counts must be strictly increasing".into()));
                }
                Plan::DiagnoseNorm(NormPlan {
                    counts,
                    nu: self.positive("nu", 0.5)?,
                    theta: self.positive("theta", 1.0)?,
                    nugget: self.optional_positive("nugget")?,
                    inconsistent: self.inconsistent.unwrap_or(false),
                    ode_form: self.ode_form.unwrap_or_default(),
                    ic: self.ic_name("burgers-paper")?,
                })
            }
        };
        Ok(plan)
    }

    /// Settings of the table command.
    pub fn table1_plan(&self) -> CliResult<Table1Plan> {
        let sizes = self.n_list.clone().unwrap_or_else(|| TABLE1_SIZES.to_vec());
        if sizes.is_empty() {
            return Err(CliError::Validation("n_list is empty".into()));
        }
        if let Some(bad) = sizes.iter().find(|n| !TABLE1_SIZES.contains(n)) {
            return Err(CliError::Validation(format!("N = {bad} is not one of {TABLE1_SIZES:?}")));
        }
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sizes.len() {
            return Err(CliError::Validation("n_list has repeated entries".into()));
        }
        Ok(Table1Plan {
            sizes: sorted,
            nu: self.positive("nu", 0.5)?,
            theta: self.positive("theta", 1.0)?,
            nugget: self.optional_positive("nugget")?,
            ode_form: self.ode_form.unwrap_or_default(),
            eval_points: self.eval_points()?,
        })
    }

    /// Fields that have no meaning for the experiment are an error rather
    /// than silently ignored.
    fn reject_foreign(&self, experiment: Experiment) -> CliResult<()> {
        use Experiment::*;
        let set: [(&str, bool, &[Experiment]); 22] = [
            ("nu", self.nu.is_some(), &[ColeHopf, ColeHopfDiscrete, ColeHopfMulti, DiagnoseNorm]),
            ("theta", self.theta.is_some(), &[ColeHopf, ColeHopfDiscrete, ColeHopfMulti, FirstOrder, CgcPde, DiagnoseNorm]),
            ("learn_kernel", self.learn_kernel.is_some(), &[ColeHopf, ColeHopfDiscrete, ColeHopfMulti, FirstOrder]),
            ("h", self.h.is_some(), &[ColeHopfDiscrete]),
            ("dx", self.dx.is_some(), &[ColeHopfDiscrete]),
            ("lambda1", self.lambda1.is_some(), &[CgcPde, BrusselatorNf]),
            ("lambda2", self.lambda2.is_some(), &[CgcPde, BrusselatorNf]),
            ("lambda3", self.lambda3.is_some(), &[CgcPde, BrusselatorNf]),
            ("gamma", self.gamma.is_some(), &[CgcPde]),
            ("a", self.a.is_some(), &[BrusselatorNf]),
            ("b", self.b.is_some(), &[BrusselatorNf]),
            ("dt", self.dt.is_some(), &[BrusselatorNf]),
            ("samples", self.samples.is_some(), &[BrusselatorNf]),
            ("t_end", self.t_end.is_some(), &[BrusselatorNf]),
            ("ic", self.ic.is_some(), &[ColeHopf, ColeHopfDiscrete, FirstOrder, CgcPde, DiagnoseNorm]),
            ("ode_form", self.ode_form.is_some(), &[ColeHopf, ColeHopfMulti, DiagnoseNorm]),
            ("optimizer", self.optimizer.is_some(), &[CgcPde, BrusselatorNf]),
            ("max_iters", self.max_iters.is_some(), &[CgcPde, BrusselatorNf]),
            ("l2_squared", self.l2_squared.is_some(), &[CgcPde]),
            ("free_z", self.free_z.is_some(), &[CgcPde]),
            ("eval_points", self.eval_points.is_some(), &[ColeHopf, ColeHopfDiscrete]),
            ("counts", self.counts.is_some() || self.inconsistent.is_some(), &[DiagnoseNorm]),
        ];
        for (name, present, allowed) in set {
            if present && !allowed.contains(&experiment) {
                return Err(CliError::Validation(format!("'{name}' does not apply to {experiment}")));
            }
        }
        if self.n.is_some() && matches!(experiment, DiagnoseNorm | BrusselatorNf) {
            return Err(CliError::Validation(format!("'n' does not apply to {experiment}")));
        }
        if self.n_list.is_some() {
            return Err(CliError::Validation("'n_list' belongs to the table1 command".into()));
        }
        Ok(())
    }

    fn count(&self, name: &str, default: usize) -> CliResult<usize> {
        let v = match name {
            "n" => self.n,
            "samples" => self.samples,
            "max_iters" => self.max_iters,
            _ => unreachable!("unknown count field {name}"),
        }
        .unwrap_or(default);
        if v == 0 {
            return Err(CliError::Validation(format!("'{name}' must be positive")));
        }
        Ok(v)
    }

    fn field(&self, name: &str) -> Option<f64> {
        match name {
            "nu" => self.nu,
            "theta" => self.theta,
            "nugget" => self.nugget,
            "h" => self.h,
            "lambda1" => self.lambda1,
            "lambda2" => self.lambda2,
            "lambda3" => self.lambda3,
            "gamma" => self.gamma,
            "a" => self.a,
            "b" => self.b,
            "dt" => self.dt,
            "t_end" => self.t_end,
            _ => unreachable!("unknown numeric field {name}"),
        }
    }

    fn positive(&self, name: &str, default: f64) -> CliResult<f64> {
        positive_value(name, self.field(name).unwrap_or(default))
    }

    fn optional_positive(&self, name: &str) -> CliResult<Option<f64>> {
        self.field(name).map(|v| positive_value(name, v)).transpose()
    }

    fn finite(&self, name: &str, default: f64) -> CliResult<f64> {
        let v = self.field(name).unwrap_or(default);
        if !v.is_finite() {
            return Err(CliError::Validation(format!("'{name}' must be finite, got {v}")));
        }
        Ok(v)
    }

    fn kernel_choice(&self) -> CliResult<KernelChoice> {
        let learn = self.learn_kernel.unwrap_or(false);
        if learn && self.theta.is_some() {
            return Err(CliError::Validation("'theta' is fixed but 'learn_kernel' asks to learn it".into()));
        }
        Ok(if learn { KernelChoice::Learned } else { KernelChoice::Fixed(self.positive("theta", 1.0)?) })
    }

    fn ic_name(&self, default: &str) -> CliResult<String> {
        let name = self.ic.clone().unwrap_or_else(|| default.to_string());
        ic::lookup(&name).map_err(|_| {
            let known: Vec<&str> = ic::REGISTRY.iter().map(|c| c.name).collect();
            CliError::Validation(format!("unknown initial condition '{name}'; known: {}", known.join(", ")))
        })?;
        Ok(name)
    }

    fn eval_points(&self) -> CliResult<usize> {
        let n = self.eval_points.unwrap_or(ANCHOR_INTERVAL_POINTS);
        if n < 2 {
            return Err(CliError::Validation("'eval_points' must be at least 2".into()));
        }
        Ok(n)
    }
}

fn positive_value(name: &str, v: f64) -> CliResult<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Validation(format!("'{name}' must be positive and finite, got {v}")));
    }
    Ok(v)
}

fn parse_enum<T: serde::de::DeserializeOwned>(name: &str, what: &str) -> CliResult<T> {
    serde_json::from_value(Value::String(name.replace('-', "_")))
        .map_err(|_| CliError::Validation(format!("unknown {what} '{name}'")))
}

/// Output directory precedence: flag, then environment, then config file,
/// then the built-in default.
pub fn resolve_output_dir(flag: Option<&Path>, env: Option<OsString>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = env.filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Fixed(f64),
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColeHopfPlan {
    pub n: usize,
    pub nu: f64,
    pub kernel: KernelChoice,
    pub nugget: Option<f64>,
    pub ic: String,
    pub ode_form: OdeForm,
    pub eval_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePlan {
    pub n: usize,
    pub nu: f64,
    pub h: f64,
    pub kernel: KernelChoice,
    pub nugget: Option<f64>,
    pub ic: String,
    pub eval_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiPlan {
    pub points_per_ic: usize,
    pub nu: f64,
    pub kernel: KernelChoice,
    pub nugget: Option<f64>,
    pub ode_form: OdeForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderPlan {
    pub n: usize,
    pub kernel: KernelChoice,
    pub nugget: Option<f64>,
    pub ic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgcPlan {
    pub n: usize,
    pub theta: f64,
    pub gamma: f64,
    pub nugget: f64,
    /// `None` balances the weights at the initial state.
    pub weights: Option<LossWeights>,
    pub optimizer: CgcOptimizer,
    pub max_iters: usize,
    pub l2_squared: bool,
    pub free_z: bool,
    pub ic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NfPlan {
    pub a: f64,
    pub b: f64,
    /// RK4 step.
    pub dt: f64,
    /// RK4 steps between stored samples.
    pub stride: usize,
    pub samples: usize,
    pub nugget: f64,
    pub weights: LossWeights,
    pub optimizer: NfOptimizer,
    pub max_iters: usize,
    pub initial: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormPlan {
    pub counts: Vec<usize>,
    pub nu: f64,
    pub theta: f64,
    pub nugget: Option<f64>,
    pub inconsistent: bool,
    pub ode_form: OdeForm,
    pub ic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Plan {
    pub sizes: Vec<usize>,
    pub nu: f64,
    pub theta: f64,
    pub nugget: Option<f64>,
    pub ode_form: OdeForm,
    pub eval_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Plan {
    ColeHopf(ColeHopfPlan),
    ColeHopfDiscrete(DiscretePlan),
    ColeHopfMulti(MultiPlan),
    FirstOrder(FirstOrderPlan),
    CgcPde(CgcPlan),
    BrusselatorNf(NfPlan),
    DiagnoseNorm(NormPlan),
}

impl Plan {
    pub fn experiment(&self) -> Experiment {
        match self {
            Plan::ColeHopf(_) => Experiment::ColeHopf,
            Plan::ColeHopfDiscrete(_) => Experiment::ColeHopfDiscrete,
            Plan::ColeHopfMulti(_) => Experiment::ColeHopfMulti,
            Plan::FirstOrder(_) => Experiment::FirstOrder,
            Plan::CgcPde(_) => Experiment::CgcPde,
            Plan::BrusselatorNf(_) => Experiment::BrusselatorNf,
            Plan::DiagnoseNorm(_) => Experiment::DiagnoseNorm,
        }
    }
}
