use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vicontrol::experiments::{self, ExperimentConfig};
use vicontrol::Error;

#[derive(Parser, Debug)]
#[command(name = "vicontrol", version, about = "Coefficient control of an elliptic obstacle problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize with the obstacle problem as state constraint.
    Example1(Common),
    /// Penalty path-following and the error table against example1.
    Example2(Common),
    /// Discretization errors of the state equation across levels.
    Convergence(Common),
    /// Adjoint gradient and directional derivative checks.
    Gradcheck(Common),
    /// Difference quotients of the obstacle solution map.
    Sensitivity(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    /// Comma-separated penalty parameters.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Additional `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> vicontrol::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(o) = &self.out {
            overrides.push(format!("output_dir={}", o.display()));
        }
        if let Some(l) = self.level {
            overrides.push(format!("level={l}"));
        }
        if let Some(g) = &self.gamma {
            overrides.push(format!("gamma={g}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn run(command: &Command) -> vicontrol::Result<()> {
    match command {
        Command::Example1(c) => {
            let out = experiments::run_example1(&c.config()?)?;
            println!(
                "objective {:.6e}, {} iterations ({:?}), {} active nodes, |lambda|/|f| = {:.3}",
                out.result.objective(),
                out.result.iterations(),
                out.result.termination,
                out.vi.num_active(),
                out.multiplier_ratio
            );
            if out.admissibility_violations > 0 {
                return Err(Error::CheckFailed(format!(
                    "{} iterates left the admissible set",
                    out.admissibility_violations
                )));
            }
        }
        Command::Example2(c) => {
            let out = experiments::run_example2(&c.config()?)?;
            print!("{}", out.table.to_csv());
            if out.admissibility_violations > 0 {
                return Err(Error::CheckFailed(format!(
                    "{} iterates left the admissible set",
                    out.admissibility_violations
                )));
            }
        }
        Command::Convergence(c) => {
            let table = experiments::run_convergence(&c.config()?)?;
            print!("{}", table.to_csv());
        }
        Command::Gradcheck(c) => {
            let cfg = c.config()?;
            let report = experiments::run_gradcheck(&cfg)?;
            println!(
                "adjoint vs finite differences: max relative error {:.3e} (tolerance {:.1e})",
                report.max_rel_err, cfg.gradcheck_tol
            );
            println!(
                "difference quotients monotone: {}, smallest order {:.3}",
                report.derivative.monotone,
                report.derivative.min_order()
            );
            if !report.passed {
                return Err(Error::CheckFailed("gradient or derivative check out of tolerance".into()));
            }
        }
        Command::Sensitivity(c) => {
            let report = experiments::run_sensitivity(&c.config()?)?;
            print!("{}", report.to_csv());
            if !report.monotone {
                return Err(Error::CheckFailed("difference-quotient errors do not decrease".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::CheckFailed(_) => 4,
                _ => 3,
            })
        }
    }
}
