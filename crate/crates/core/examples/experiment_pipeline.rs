//! The four experiment drivers end to end on a small pendulum setup:
//! pre-train, error analysis, sweep and online training. CSV files land in
//! the output directory (default `out/pipeline`).
//!
//! cargo run --release --example experiment_pipeline [out_dir]

use replan::envs::EnvKind;
use replan::harness::{run_error_analysis, run_online, run_pretrain, run_sweep, ExperimentConfig, SweepGrid};

fn main() -> replan::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/pipeline".into());
    let cfg = ExperimentConfig {
        task_horizon: Some(100),
        n_iterations: 2,
        pretrain_seeds: vec![0, 1],
        runs_per_setting: 3,
        error_analysis_n: vec![0, 3, 6],
        sweep: SweepGrid { nskip: vec![1, 3], fsa: vec![0.9], cb: vec![0.5, 1.0] },
        output_dir: out.into(),
        ..ExperimentConfig::desk(EnvKind::Pendulum)
    };

    let pre = run_pretrain(&cfg)?;
    for r in &pre.rows {
        println!(
            "pretrain seed {} final return {:.2}{}",
            r.seed,
            r.final_reward,
            if r.selected { " (kept)" } else { "" }
        );
    }

    for r in run_error_analysis(&cfg)?.iter().filter(|r| r.n == 6) {
        println!("n=6 step {} mean error {:.4} (+- {:.4})", r.step_index, r.mean_err, r.std_err);
    }

    for r in run_sweep(&cfg)? {
        println!("{:<9} Rw {:8.2}  Rc {:6.1}  Sx {:5.2}  RwNorm {:.2}", r.method, r.rw, r.rc, r.sx, r.rw_norm);
    }

    let online = ExperimentConfig {
        runs_per_setting: 1,
        sweep: SweepGrid { cb: vec![0.5], ..cfg.sweep.clone() },
        ..cfg.clone()
    };
    for r in run_online(&online)? {
        println!(
            "{:<9} iteration {} reward {:8.2} recalc {:5.1}%  t={:.1}s",
            r.setting, r.iteration, r.reward_mean, r.recalc_pct, r.wall_seconds
        );
    }
    println!("CSV written to {}", cfg.output_dir.display());
    Ok(())
}
