use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linbreg_bench::{grad_check, run_experiment, BenchError, ExperimentConfig};

/// Relative error above which `grad-check` fails.
const GRAD_CHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(version, about = "Run linearised Bregman experiments from plain-text configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artefacts.
    Run(Target),
    /// Validate a config and print it fully resolved.
    Check(Target),
    /// Compare the energy gradient against central differences.
    GradCheck {
        #[command(flatten)]
        target: Target,
        /// Coordinates sampled per point.
        #[arg(long, default_value_t = 64)]
        coords: usize,
    },
}

#[derive(Args)]
struct Target {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl Target {
    fn load(&self) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        cfg.override_with(self.seed, self.out.clone(), self.max_iter);
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run(t) => {
            let log = run_experiment(&t.load()?)?;
            print!("{}", log.summary.to_text());
        }
        Command::Check(t) => print!("{}", t.load()?.resolved()),
        Command::GradCheck { target, coords } => {
            let reports = grad_check(&target.load()?, coords)?;
            let mut ok = true;
            for (i, r) in reports.iter().enumerate() {
                let pass = r.max_rel_err <= GRAD_CHECK_TOL;
                ok &= pass;
                println!(
                    "point {i}: max_rel_err {:e} at coordinate {} (step {:e}) {}",
                    r.max_rel_err,
                    r.worst_coordinate,
                    r.step,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
