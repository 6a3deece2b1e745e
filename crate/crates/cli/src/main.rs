use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpsimplify_cli::config::{resolve_output_dir, OUTPUT_DIR_ENV};
use gpsimplify_cli::{evaluate, exit, experiments, table1, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "gpsimplify", version, about = "Learn transformations between differential equations with Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment configuration.
    config: PathBuf,
    /// Where artifacts go; overrides the environment and the config file.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set n=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    learn_kernel: bool,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> CliResult<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(n) = self.n {
            overrides.push(format!("n={n}"));
        }
        if let Some(t) = self.theta {
            overrides.push(format!("theta={t}"));
        }
        if self.learn_kernel {
            overrides.push("learn_kernel=true".into());
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        ExperimentConfig::load(&self.config)?.with_overrides(&overrides)
    }

    fn output_dir(&self, config: &ExperimentConfig) -> PathBuf {
        resolve_output_dir(self.output_dir.as_deref(), std::env::var_os(OUTPUT_DIR_ENV), config.output_dir.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts and summary.json.
    Run(RunArgs),
    /// Errors of the learned and fixed-lengthscale fits over a list of sample sizes.
    Table1(RunArgs),
    /// Evaluate a saved interpolant (or one of its derivatives) at given points.
    Evaluate {
        interpolant: PathBuf,
        /// CSV whose first column lists the evaluation points.
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 0)]
        order: u8,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run(args) => {
            let config = args.config()?;
            let dir = args.output_dir(&config);
            let summary = experiments::run(&config, &dir)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&summary.metrics).expect("metrics serialize"));
            println!("artifacts in {}", dir.display());
        }
        Command::Table1(args) => {
            let config = args.config()?;
            let dir = args.output_dir(&config);
            let (table, _) = table1::run(&config, &dir)?;
            println!("{:>6} {:>12} {:>14} {:>14}", "N", "theta", "learning", "no-learning");
            for r in &table.rows {
                println!("{:>6} {:>12.4} {:>14.3e} {:>14.3e}", r.n, r.learned_theta, r.learned_error, r.fixed_error);
            }
            println!("artifacts in {}", dir.display());
        }
        Command::Evaluate { interpolant, points, order } => {
            evaluate::evaluate(&interpolant, &points, order, &mut std::io::stdout().lock())?;
        }
    }
    Ok(())
}
