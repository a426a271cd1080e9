//! Fit a probabilistic ensemble to random pendulum transitions and look at
//! its one-step predictions and their uncertainty split.
//!
//! cargo run --release --example train_ensemble

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replan::agent::random_episode;
use replan::buffer::ReplayBuffer;
use replan::dynamics::{
    fit, variance_decompose, EnsembleModel, EnsembleOptimizer, ModelConfig, ParticleSet, TrainConfig,
};
use replan::envs::EnvSpec;
use replan::types::euclidean_error;

fn main() -> replan::Result<()> {
    let spec = EnvSpec::pendulum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut train = ReplayBuffer::new();
    for _ in 0..4 {
        random_episode(&spec, &mut train, &mut rng)?;
    }
    let mut held_out = ReplayBuffer::new();
    random_episode(&spec, &mut held_out, &mut rng)?;

    let cfg = ModelConfig { hidden: 64, ..Default::default() };
    let mut model = EnsembleModel::new(spec.state_dim(), spec.action_dim(), spec.angle_dims(), &cfg, &mut rng)?;
    let mut opt = EnsembleOptimizer::new(&model, TrainConfig { epochs: 40, ..Default::default() })?;
    let report = fit(&mut model, &train, &mut opt, &mut rng)?;
    for (e, losses) in report.epoch_losses.iter().enumerate().step_by(5) {
        println!("epoch {e:>2}  mean NLL {:8.4}", losses.iter().sum::<f64>() / losses.len() as f64);
    }

    // one-step error of the particle mean on unseen transitions
    let mut errors = Vec::new();
    for tr in held_out.iter() {
        let mut ps = ParticleSet::new(&tr.s, 20, 5)?;
        ps.propagate(&tr.a, &model, &mut rng)?;
        let mean: Vec<f64> = (0..spec.state_dim()).map(|j| ps.states().column(j).mean().unwrap()).collect();
        errors.push(euclidean_error(&tr.s_next, &mean)?);
    }
    errors.sort_by(f64::total_cmp);
    println!(
        "held-out one-step error: median {:.4}  p90 {:.4}  max {:.4}",
        errors[errors.len() / 2],
        errors[errors.len() * 9 / 10],
        errors[errors.len() - 1]
    );

    // uncertainty grows along an open-loop rollout
    let mut ps = ParticleSet::new(&spec.nominal_start(), 20, 5)?;
    for t in 1..=15 {
        ps.propagate(&[1.0], &model, &mut rng)?;
        if t % 5 == 0 {
            let (ale, epi) = variance_decompose(&ps)?;
            println!("step {t:>2}  aleatoric {ale:.3?}  epistemic {epi:.3?}");
        }
    }
    Ok(())
}
