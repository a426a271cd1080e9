//! Train a pendulum model briefly, then act on its imagined trajectories
//! under several skip policies and compare reward against planner calls.
//!
//! cargo run --release --example skip_policies

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replan::agent::{error_model_from_buffer, pretrain, AgentConfig};
use replan::envs::EnvKind;
use replan::harness::{evaluate, summarize};
use replan::planner::CemConfig;
use replan::skip::SkipPolicyConfig;

fn main() -> replan::Result<()> {
    let cfg = AgentConfig {
        env: EnvKind::Pendulum,
        planner: CemConfig { population: 100, elites: 10, iterations: 3, particles: 10, ..Default::default() },
        n_iterations: 2,
        ..Default::default()
    };
    let trained = pretrain(&cfg, &[0])?;
    println!("pre-training final return {:.2}", trained.final_rewards[0]);

    let spec = cfg.env_spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let errors = error_model_from_buffer(&trained.model, &trained.buffer, cfg.planner.particles, 0.05, &mut rng)?;
    println!(
        "step-0 errors: M={} mu0={:.4} theta0={:.4} normal={}",
        errors.len(),
        errors.mu0(),
        errors.theta0(),
        errors.is_normal()
    );

    let settings = [
        SkipPolicyConfig::nskip(0),
        SkipPolicyConfig::nskip(1),
        SkipPolicyConfig::nskip(4),
        SkipPolicyConfig::fsa(0.9),
        SkipPolicyConfig::cb(0.5),
        SkipPolicyConfig::cb(1.0),
    ];
    println!("{:<10} {:>9} {:>8} {:>7} {:>7}", "policy", "Rw", "Rc", "Sx", "Err");
    for pc in settings {
        let policy = pc.build(spec.plan_horizon, Some(&errors))?;
        let records = evaluate(&spec, &cfg.planner, &trained.model, &policy, 3, 11, false)?;
        let row = summarize(&pc, &records);
        println!("{:<10} {:>9.2} {:>8.1} {:>7.3} {:>7.4}", row.method, row.rw, row.rc, row.sx, row.err);
    }
    Ok(())
}
