//! Relative errors of the Cole-Hopf fit across sample sizes, with and
//! without a learned lengthscale.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, KernelChoice, Table1Plan};
use crate::error::{CliError, CliResult};
use crate::experiments::cole_hopf_run;
use crate::output::{write_json, CsvFile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub learned_theta: f64,
    pub learned_error: f64,
    pub fixed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1 {
    pub parameters: Table1Plan,
    pub rows: Vec<Table1Row>,
}

/// Computes every row. Rows are independent and run in parallel; the
/// result keeps the order of `plan.sizes`.
pub fn compute(plan: &Table1Plan) -> CliResult<Table1> {
    let rows = plan
        .sizes
        .par_iter()
        .map(|&n| {
            let run = |choice| cole_hopf_run("burgers-paper", n, plan.nu, plan.ode_form, choice, plan.nugget, plan.eval_points);
            let learned = run(KernelChoice::Learned)?;
            let fixed = run(KernelChoice::Fixed(plan.theta))?;
            Ok(Table1Row { n, learned_theta: learned.fit.theta, learned_error: learned.relative_l2, fixed_error: fixed.relative_l2 })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Table1 { parameters: plan.clone(), rows })
}

/// Writes `table1.csv` and `table1.json` and returns their paths.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> CliResult<(Table1, Vec<PathBuf>)> {
    let plan = config.table1_plan()?;
    let table = compute(&plan)?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let sizes: Vec<String> = table.rows.iter().map(|r| r.n.to_string()).collect();
    let mut header = vec!["method"];
    header.extend(sizes.iter().map(String::as_str));
    let mut csv = CsvFile::create(&out_dir.join("table1.csv"), &header)?;
    csv.labeled_row("learning", &table.rows.iter().map(|r| r.learned_error).collect::<Vec<_>>())?;
    csv.labeled_row("no-learning", &table.rows.iter().map(|r| r.fixed_error).collect::<Vec<_>>())?;
    let csv_path = csv.finish()?;
    let json_path = write_json(&out_dir.join("table1.json"), &table)?;
    Ok((table, vec![csv_path, json_path]))
}
