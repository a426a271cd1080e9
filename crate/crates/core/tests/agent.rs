use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replan::agent::{aui_episode, mean_std, run_aui, run_mbrl, AgentConfig};
use replan::buffer::ReplayBuffer;
use replan::dynamics::{ConstantModel, ModelConfig, TrainConfig};
use replan::envs::{EnvKind, EnvSpec};
use replan::planner::CemConfig;
use replan::skip::{Policy, SkipPolicyConfig};

fn tiny_planner() -> CemConfig {
    CemConfig { population: 12, elites: 3, iterations: 2, particles: 5, ..Default::default() }
}

fn tiny_agent(env: EnvKind, train_model: bool) -> AgentConfig {
    AgentConfig {
        env,
        task_horizon: Some(40),
        planner: tiny_planner(),
        n_iterations: 2,
        train_model,
        model: ModelConfig { hidden: 8, ..Default::default() },
        train: TrainConfig { epochs: 2, ..Default::default() },
        ..Default::default()
    }
}

fn assert_same_buffer(a: &ReplayBuffer, b: &ReplayBuffer) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x, y);
    }
}

fn equivalent(cfg: &AgentConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = cfg.new_model(&mut rng).unwrap();
    let mut buf_mbrl = ReplayBuffer::new();
    let rec_mbrl = run_mbrl(cfg, &mut model.clone(), &mut buf_mbrl, &mut rng.clone()).unwrap();
    let mut buf_aui = ReplayBuffer::new();
    let rec_aui = run_aui(cfg, &mut model, &mut buf_aui, None, &mut rng).unwrap();
    assert_same_buffer(&buf_mbrl, &buf_aui);
    for (m, a) in rec_mbrl.iter().zip(&rec_aui) {
        assert_eq!(m.per_step_rewards, a.per_step_rewards);
        assert_eq!(m.step_errors, a.step_errors);
        assert_eq!(m.recalc_count, a.recalc_count);
        assert_eq!(m.consecutive_skip_depths, a.consecutive_skip_depths);
        assert_eq!(a.sx(), 0.0);
    }
}

#[test]
fn nskip_zero_reproduces_mbrl_on_every_env() {
    for env in EnvKind::ALL {
        equivalent(&tiny_agent(env, false));
    }
}

#[test]
fn nskip_zero_reproduces_mbrl_while_training() {
    equivalent(&tiny_agent(EnvKind::Pendulum, true));
}

#[test]
fn nskip_recalculation_counts_are_exact() {
    let cases = [(1, 200, 100), (2, 200, 67), (3, 200, 50), (4, 150, 30), (5, 150, 25), (9, 150, 15)];
    let base = EnvSpec::cartpole();
    let model = ConstantModel::identity(base.state_dim(), base.action_dim(), 5);
    let cem = CemConfig { population: 4, elites: 1, iterations: 1, particles: 5, ..Default::default() };
    for (n, task_h, rc) in cases {
        let spec = base.clone().with_task_horizon(task_h).unwrap();
        let mut counts = Vec::new();
        let mut sxs = Vec::new();
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec =
                aui_episode(&spec, &cem, &model, &Policy::NSkip { n }, &mut ReplayBuffer::new(), &mut rng).unwrap();
            assert_eq!(rec.steps(), task_h);
            counts.push(rec.recalc_count as f64);
            sxs.push(rec.sx());
        }
        assert_eq!(mean_std(&counts), (rc as f64, 0.0), "n {n} TaskH {task_h}");
        assert_eq!(mean_std(&sxs).1, 0.0);
        if task_h == 200 && n <= 2 {
            let expect = [0.990, 1.970][n - 1];
            assert!((mean_std(&sxs).0 - expect).abs() < 5e-4, "n {n}: Sx {}", sxs[0]);
        }
    }
}

#[test]
fn episodes_are_seed_deterministic() {
    let cfg = tiny_agent(EnvKind::Reacher2, false);
    let spec = cfg.env_spec().unwrap();
    let model = cfg.new_model(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let policy = SkipPolicyConfig::cb(0.5).build(spec.plan_horizon, None).unwrap();
    let run = || {
        aui_episode(&spec, &cfg.planner, &model, &policy, &mut ReplayBuffer::new(), &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn first_replan_is_shared_across_n() {
    let cfg = tiny_agent(EnvKind::Pendulum, false);
    let spec = cfg.env_spec().unwrap();
    let model = cfg.new_model(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let records: Vec<_> = [0, 1, 4]
        .iter()
        .map(|&n| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            aui_episode(&spec, &cfg.planner, &model, &Policy::NSkip { n }, &mut ReplayBuffer::new(), &mut rng).unwrap()
        })
        .collect();
    for r in &records[1..] {
        assert_eq!(r.seed, records[0].seed);
        assert_eq!(r.step_errors[0], records[0].step_errors[0]);
        assert_eq!(r.per_step_rewards[0], records[0].per_step_rewards[0]);
    }
}
