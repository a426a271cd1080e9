//! Model-predictive control through the true dynamics: one episode per
//! task, replanning at every step.
//!
//! cargo run --release --example plan_with_exact_model [population]

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replan::agent::mbrl_episode;
use replan::buffer::ReplayBuffer;
use replan::dynamics::ExactModel;
use replan::envs::{EnvKind, EnvSpec};
use replan::planner::CemConfig;

fn main() -> replan::Result<()> {
    let population = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cem = CemConfig { population, elites: population / 10, iterations: 3, particles: 5, ..Default::default() };
    for kind in [EnvKind::Pendulum, EnvKind::Reacher2, EnvKind::Cartpole] {
        let spec = EnvSpec::new(kind);
        let model = ExactModel::new(spec.clone(), 5);
        let t = Instant::now();
        let rec = mbrl_episode(&spec, &cem, &model, &mut ReplayBuffer::new(), &mut ChaCha8Rng::seed_from_u64(1))?;
        let tail = &rec.per_step_rewards[rec.steps() - 10..];
        println!(
            "{:<9} return {:9.3}  last-10 mean reward {:7.4}  {} plans in {:.1}s",
            spec.name(),
            rec.total_reward,
            tail.iter().sum::<f64>() / 10.0,
            rec.recalc_count,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
