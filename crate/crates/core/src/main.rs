use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsa_core::commands::{cmd_assess, cmd_optimize, cmd_simulate, cmd_sweep};
use dsa_core::config::{RunConfig, SweepMode};

#[derive(Parser)]
#[command(
    name = "dsa",
    version,
    about = "Block copolymer equilibria and guidepost design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML (or .json) run configuration
    #[arg(long)]
    config: PathBuf,
    /// overrides the sampler seed
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for `assess`
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// output directory; defaults to `[output] dir`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium on the configured substrate
    Simulate(Common),
    /// Optimize guidepost positions for the configured target
    Optimize(Common),
    /// Re-solve a design from many random initial guesses
    Assess {
        #[command(flatten)]
        common: Common,
        /// design CSV; defaults to `[assess] design`
        #[arg(long)]
        design: Option<PathBuf>,
        /// number of samples; defaults to `[assess] samples`
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Design objective over a range of strip spacings
    Sweep {
        #[command(flatten)]
        common: Common,
        /// continuation or fixed; defaults to `[sweep] mode`
        #[arg(long)]
        mode: Option<SweepMode>,
    },
}

fn load(c: &Common) -> dsa_core::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> dsa_core::Result<u8> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_simulate(&cfg, &out)?.report;
            println!(
                "F = {:.8e}, residual {:.3e}, {} iterations, {:?}",
                r.energy, r.residual, r.iterations, r.termination
            );
            Ok(0)
        }
        Command::Optimize(c) => {
            let (cfg, out) = load(&c)?;
            let o = cmd_optimize(&cfg, &out)?;
            let r = &o.report;
            println!(
                "{:?} after {} outer iterations: J = {:.6e}, Q = {:.6e}, |g| = {:.3e}, z = {:?}",
                r.termination, r.outer_iterations, r.j, r.q, r.grad_norm, r.z
            );
            Ok(o.exit_code() as u8)
        }
        Command::Assess {
            common,
            design,
            samples,
        } => {
            let (cfg, out) = load(&common)?;
            let n = samples.unwrap_or(cfg.assess.samples);
            let r = cmd_assess(&cfg, design.as_deref(), n, common.jobs, &out)?;
            let s = r.q_stats;
            println!(
                "{n} samples: Q mean {:.6e}, std {:.6e}, min {:.6e}, max {:.6e}; lowest energy at seed {}",
                s.mean, s.std, s.min, s.max, r.samples[r.min_energy_index].seed
            );
            Ok(0)
        }
        Command::Sweep { common, mode } => {
            let (cfg, out) = load(&common)?;
            let rows = cmd_sweep(&cfg, mode.unwrap_or(cfg.sweep.mode), &out)?;
            println!(
                "{} spacings written to {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
