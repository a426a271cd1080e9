//! Save an ensemble with its replay buffer and load it back.
//!
//! cargo run --example checkpoint_round_trip

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replan::agent::{random_episode, AgentConfig};
use replan::buffer::ReplayBuffer;
use replan::envs::EnvKind;
use replan::harness::{load_checkpoint, save_checkpoint};

fn main() -> replan::Result<()> {
    let cfg = AgentConfig { env: EnvKind::Reacher2, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = cfg.new_model(&mut rng)?;
    let mut buf = ReplayBuffer::new();
    random_episode(&cfg.env_spec()?, &mut buf, &mut rng)?;

    let dir = std::env::temp_dir().join("replan-example");
    let path = dir.join("reacher.auim");
    save_checkpoint(&path, &model, &buf)?;
    let (loaded, loaded_buf) = load_checkpoint(&path)?;
    println!(
        "{} bytes, layers {:?}, {} transitions, identical: {}",
        std::fs::metadata(&path)?.len(),
        loaded.layer_sizes(),
        loaded_buf.len(),
        loaded == model && loaded_buf == buf
    );

    std::fs::write(&path, b"AUIM")?;
    println!("truncated file: {}", load_checkpoint(&path).unwrap_err());
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
