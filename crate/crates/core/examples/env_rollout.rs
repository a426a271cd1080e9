//! Roll each task out under random and zero actions.
//!
//! cargo run --release --example env_rollout

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use replan::envs::{EnvInstance, EnvKind, EnvSpec};

fn main() -> replan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for kind in EnvKind::ALL {
        let spec = EnvSpec::new(kind);
        let mut env = EnvInstance::new(spec.clone())?;
        let s0 = env.reset(7);
        let (mut random, mut idle) = (0.0, 0.0);
        while !env.is_done() {
            let a: Vec<f64> = (0..spec.action_dim())
                .map(|j| rng.random_range(spec.action_bounds.low()[j]..=spec.action_bounds.high()[j]))
                .collect();
            random += env.step(&a)?.1;
        }
        env.reset(7);
        while !env.is_done() {
            idle += env.step(&vec![0.0; spec.action_dim()])?.1;
        }
        println!(
            "{:<9} d_s={} d_a={} TaskH={} H={}  start {:?}",
            spec.name(),
            spec.state_dim(),
            spec.action_dim(),
            spec.task_horizon,
            spec.plan_horizon,
            s0.as_slice().iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
        println!(
            "          random return {random:9.3}   zero-action return {idle:9.3}   upper bound {:.1}",
            spec.reward_upper_bound()
        );
    }
    Ok(())
}
