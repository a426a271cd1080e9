use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use replan::harness::{run_error_analysis, run_online, run_pretrain, run_sweep, ExperimentConfig};

#[derive(Parser)]
#[command(name = "replan", version, about = "Planning experiments with trajectory reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train ensembles from scratch and save the best as a checkpoint
    Pretrain(Common),
    /// Prediction error by steps since the last replan
    ErrorAnalysis(Common),
    /// Reward and recalculation rate for every skip policy setting
    Sweep(Common),
    /// Train online while skipping with the confidence bound
    Online(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> replan::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> replan::Result<()> {
    match cli.command {
        Command::Pretrain(c) => {
            let s = run_pretrain(&c.load()?)?;
            for r in &s.rows {
                println!(
                    "run {} seed {} final reward {:.3}{}",
                    r.run,
                    r.seed,
                    r.final_reward,
                    if r.selected { " *" } else { "" }
                );
            }
            println!("checkpoint: {}", s.checkpoint.display());
        }
        Command::ErrorAnalysis(c) => {
            let cfg = c.load()?;
            let rows = run_error_analysis(&cfg)?;
            println!("{} rows -> {}", rows.len(), cfg.output_dir.join("error_analysis.csv").display());
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            for r in run_sweep(&cfg)? {
                println!(
                    "{:<10} Rw {:>9.3} ({:>7.3})  Rc {:>7.2}  Sx {:>6.3}  Err {:.4}",
                    r.method, r.rw, r.rw_std, r.rc, r.sx, r.err
                );
            }
        }
        Command::Online(c) => {
            let cfg = c.load()?;
            for r in run_online(&cfg)? {
                println!(
                    "{:<10} it {:>2}  {:>8.1}s  reward {:>9.3}  recalc {:>6.2}%  err {:.4}",
                    r.setting, r.iteration, r.wall_seconds, r.reward_mean, r.recalc_pct, r.err_mean
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
