use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mpg_core::dynamics::Guard;
use mpg_core::Environment;
use mpg_cli::accuracy::cmd_accuracy;
use mpg_cli::checks::{cmd_verify, VerifyOptions};
use mpg_cli::plot::{cmd_plot, default_plot_dir, YScale};
use mpg_cli::{cmd_run, ExperimentConfig, RunOverrides};

/// Learning dynamics in tabular Markov potential games.
///
/// Log verbosity follows RUST_LOG (default `info`).
#[derive(Parser)]
#[command(name = "mpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GuardArg {
    Enforce,
    Warn,
    Off,
}

impl From<GuardArg> for Guard {
    fn from(g: GuardArg) -> Self {
        match g {
            GuardArg::Enforce => Guard::Enforce,
            GuardArg::Warn => Guard::Warn,
            GuardArg::Off => Guard::Off,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed and algorithm of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's `output`, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// `N` runs from the config's seed_base, or a range `A..B`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        guard: Option<GuardArg>,
    },
    /// L1 accuracy of every stored policy against the final one.
    Accuracy {
        /// Directory written by `run`.
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG charts of accuracy CSVs.
    Plot {
        /// Accuracy CSV files or directories (default: `<out>/accuracy`).
        inputs: Vec<PathBuf>,
        /// Directory written by `run`; charts go to `<out>/plots`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        linear: bool,
    },
    /// Potential, gradient, smoothness and best-response checks; exits nonzero on failure.
    Verify {
        /// Experiment config (only `[environment]` is required).
        #[arg(long, conflicts_with = "env")]
        config: Option<PathBuf>,
        /// Environment file.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_seeds(text: &str) -> Result<(u64, Option<u64>)> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b <= a {
            bail!("empty seed range `{text}`");
        }
        Ok((b - a, Some(a)))
    } else {
        let n: u64 = text.trim().parse().with_context(|| format!("bad --seeds `{text}`"))?;
        if n == 0 {
            bail!("--seeds must be at least 1");
        }
        Ok((n, None))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seeds,
            threads,
            guard,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                let (runs, base) = parse_seeds(&s)?;
                cfg.runs = runs as usize;
                if let Some(b) = base {
                    cfg.seed_base = b;
                }
            }
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let rows = cmd_run(
                &cfg,
                &out,
                RunOverrides {
                    guard: guard.map(Guard::from),
                    threads,
                },
            )?;
            for r in &rows {
                println!(
                    "{} run {} seed {}: {} after {} iterations",
                    r.algorithm,
                    r.run_id,
                    r.seed,
                    if r.converged { "converged" } else { "not converged" },
                    r.iterations
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Accuracy { out } => {
            for f in cmd_accuracy(&out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Plot { inputs, out, linear } => {
            let inputs = if inputs.is_empty() { vec![out.join("accuracy")] } else { inputs };
            let scale = if linear { YScale::Linear } else { YScale::Log };
            for f in cmd_plot(&inputs, &default_plot_dir(&out), scale)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Verify { config, env, seed } => {
            let (environment, eta) = match (config, env) {
                (Some(c), _) => {
                    let cfg = ExperimentConfig::load(&c)?;
                    (cfg.environment.build()?, cfg.algorithm.map(|a| a.eta))
                }
                (None, Some(e)) => (Environment::load(&e)?, None),
                (None, None) => bail!("verify needs --config or --env"),
            };
            let report = cmd_verify(&environment, eta, &VerifyOptions { seed, ..VerifyOptions::default() })?;
            println!("verify {}", report.label);
            for c in &report.checks {
                println!("{c}");
            }
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_arguments() {
        assert_eq!(parse_seeds("10").unwrap(), (10, None));
        assert_eq!(parse_seeds("5..8").unwrap(), (3, Some(5)));
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("8..5").is_err());
    }
}
