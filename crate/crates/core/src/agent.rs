//! Control loops: replanning at every step, acting on an imagined
//! trajectory until a skip policy asks for a new one, and training the
//! model online while doing so.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{ReplayBuffer, Transition};
use crate::dynamics::{fit, DeltaModel, EnsembleModel, EnsembleOptimizer, ModelConfig, ParticleSet, TrainConfig};
use crate::envs::{EnvInstance, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::planner::{compute_optimal_trajectory, shifted_mean, CemConfig};
use crate::skip::{build_error_model, ErrorModel, SkipContext, SkipKind, SkipPolicy, SkipPolicyConfig};
use crate::trajectory::ImaginedTrajectory;
use crate::types::{euclidean_error, snap, ActionVec, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub env: EnvKind,
    /// Overrides the environment's episode length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_horizon: Option<usize>,
    pub planner: CemConfig,
    pub skip: SkipPolicyConfig,
    pub n_iterations: usize,
    pub train_model: bool,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Cartpole,
            task_horizon: None,
            planner: CemConfig::default(),
            skip: SkipPolicyConfig::default(),
            n_iterations: 5,
            train_model: true,
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn env_spec(&self) -> Result<EnvSpec> {
        let spec = EnvSpec::new(self.env);
        match self.task_horizon {
            Some(h) => spec.with_task_horizon(h),
            None => Ok(spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.env_spec()?;
        if self.n_iterations == 0 {
            return Err(Error::config("n_iterations must be at least 1"));
        }
        self.planner.validate()?;
        self.skip.validate(spec.plan_horizon)?;
        self.model.validate()?;
        self.train.validate()?;
        if !self.planner.particles.is_multiple_of(self.model.members) {
            return Err(Error::config("planner particles must be a multiple of the ensemble size"));
        }
        Ok(())
    }

    pub fn new_model<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnsembleModel> {
        let spec = self.env_spec()?;
        EnsembleModel::new(spec.state_dim(), spec.action_dim(), spec.angle_dims(), &self.model, rng)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Trace of one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub total_reward: f64,
    /// Planner calls (Rc).
    pub recalc_count: usize,
    /// One entry per planner call: how many steps were executed without
    /// replanning since the previous call (0 for the first call).
    pub consecutive_skip_depths: Vec<usize>,
    /// Steps executed without replanning after the last planner call.
    pub trailing_skips: usize,
    /// Position of each executed action within its trajectory.
    pub step_depths: Vec<usize>,
    /// Distance between each reached state and its prediction.
    pub step_errors: Vec<f64>,
    pub per_step_rewards: Vec<f64>,
}

impl EpisodeRecord {
    pub fn steps(&self) -> usize {
        self.per_step_rewards.len()
    }

    /// Mean of [`EpisodeRecord::consecutive_skip_depths`] (Sx).
    pub fn sx(&self) -> f64 {
        if self.consecutive_skip_depths.is_empty() {
            return 0.0;
        }
        self.consecutive_skip_depths.iter().sum::<usize>() as f64 / self.consecutive_skip_depths.len() as f64
    }

    pub fn skipped_steps(&self) -> usize {
        self.consecutive_skip_depths.iter().sum::<usize>() + self.trailing_skips
    }

    /// Planner calls per executed step.
    pub fn recalc_rate(&self) -> f64 {
        self.recalc_count as f64 / self.steps().max(1) as f64
    }

    pub fn mean_error(&self) -> f64 {
        mean_std(&self.step_errors).0
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    // Welford: a constant sample gives exactly that value and zero spread
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    (mean, (m2 / x.len() as f64).sqrt())
}

fn record(buf: &mut ReplayBuffer, s: &StateVec, a: &ActionVec, s_next: &StateVec, reward: f64) -> Result<()> {
    buf.push(Transition::new(s.clone(), a.clone(), s_next.clone(), snap(reward))?);
    Ok(())
}

/// One episode of uniformly random actions, all recorded.
pub fn random_episode<R: Rng + ?Sized>(spec: &EnvSpec, buf: &mut ReplayBuffer, rng: &mut R) -> Result<EpisodeRecord> {
    let mut env = EnvInstance::new(spec.clone())?;
    let seed: u64 = rng.random();
    let mut s = env.reset(seed);
    let bounds = &spec.action_bounds;
    let mut rec = EpisodeRecord { seed, ..Default::default() };
    while !env.is_done() {
        let raw: Vec<f64> = (0..bounds.dim()).map(|j| rng.random_range(bounds.low()[j]..=bounds.high()[j])).collect();
        let (a, _) = bounds.clamp(&raw)?;
        let (s_next, r) = env.step(&a)?;
        record(buf, &s, &a, &s_next, r)?;
        rec.total_reward += r;
        rec.per_step_rewards.push(r);
        s = s_next;
    }
    Ok(rec)
}

/// One episode that replans at every step and executes only the first
/// action of each plan.
pub fn mbrl_episode<M, R>(
    spec: &EnvSpec,
    cem: &CemConfig,
    model: &M,
    buf: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<EpisodeRecord>
where
    M: DeltaModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut env = EnvInstance::new(spec.clone())?;
    let seed: u64 = rng.random();
    let mut s = env.reset(seed);
    let mut rec = EpisodeRecord { seed, ..Default::default() };
    let mut prev: Option<ImaginedTrajectory> = None;
    while !env.is_done() {
        let warm = prev.as_ref().filter(|_| cem.warm_start).map(shifted_mean);
        let mut traj = compute_optimal_trajectory(&s, model, spec, cem, rng, warm.as_ref())?;
        rec.recalc_count += 1;
        rec.consecutive_skip_depths.push(0);
        let step = traj.advance()?;
        let (s_next, r) = env.step(&step.action)?;
        record(buf, &s, &step.action, &s_next, r)?;
        rec.step_depths.push(step.index);
        rec.step_errors.push(euclidean_error(&s_next, &step.pred_state)?);
        rec.total_reward += r;
        rec.per_step_rewards.push(r);
        s = s_next;
        prev = Some(traj);
    }
    Ok(rec)
}

/// One episode acting on imagined trajectories: the planner runs at the
/// start, whenever `policy` declines to skip, and whenever the trajectory
/// runs out. The policy is consulted after every executed action.
pub fn aui_episode<M, P, R>(
    spec: &EnvSpec,
    cem: &CemConfig,
    model: &M,
    policy: &P,
    buf: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<EpisodeRecord>
where
    M: DeltaModel + ?Sized,
    P: SkipPolicy + ?Sized,
    R: Rng + ?Sized,
{
    let mut env = EnvInstance::new(spec.clone())?;
    let seed: u64 = rng.random();
    let mut s = env.reset(seed);
    let mut rec = EpisodeRecord { seed, ..Default::default() };
    let mut traj: Option<ImaginedTrajectory> = None;
    let mut skip = false;
    let mut run = 0usize;
    while !env.is_done() {
        let current = match traj.take() {
            Some(t) if skip && !t.is_exhausted() => {
                run += 1;
                t
            }
            prev => {
                let warm = prev.as_ref().filter(|_| cem.warm_start).map(shifted_mean);
                let t = compute_optimal_trajectory(&s, model, spec, cem, rng, warm.as_ref())?;
                rec.recalc_count += 1;
                rec.consecutive_skip_depths.push(run);
                run = 0;
                t
            }
        };
        let mut current = current;
        let step = current.advance()?;
        let (s_next, r) = env.step(&step.action)?;
        record(buf, &s, &step.action, &s_next, r)?;
        let error = euclidean_error(&s_next, &step.pred_state)?;
        skip = policy.should_skip(&SkipContext {
            depth: step.index,
            actual: &s_next,
            predicted: &step.pred_state,
            sigma: &step.pred_sigma,
            error,
        })?;
        rec.step_depths.push(step.index);
        rec.step_errors.push(error);
        rec.total_reward += r;
        rec.per_step_rewards.push(r);
        s = s_next;
        traj = Some(current);
    }
    rec.trailing_skips = run;
    Ok(rec)
}

fn seed_buffer<R: Rng + ?Sized>(spec: &EnvSpec, buf: &mut ReplayBuffer, rng: &mut R) -> Result<()> {
    if buf.is_empty() {
        random_episode(spec, buf, rng)?;
    }
    Ok(())
}

/// Plan-every-step loop: for each iteration, train on the buffer (when
/// enabled) and run one episode. An empty buffer is first filled with one
/// random-controller episode.
pub fn run_mbrl<R: Rng + ?Sized>(
    cfg: &AgentConfig,
    model: &mut EnsembleModel,
    buf: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<Vec<EpisodeRecord>> {
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    seed_buffer(&spec, buf, rng)?;
    let mut opt = EnsembleOptimizer::new(model, cfg.train.clone())?;
    let mut records = Vec::with_capacity(cfg.n_iterations);
    for _ in 0..cfg.n_iterations {
        if cfg.train_model {
            fit(model, buf, &mut opt, rng)?;
        }
        records.push(mbrl_episode(&spec, &cfg.planner, &*model, buf, rng)?);
    }
    Ok(records)
}

/// [`run_aui`] with an explicit policy.
pub fn run_aui_with<P, R>(
    cfg: &AgentConfig,
    model: &mut EnsembleModel,
    buf: &mut ReplayBuffer,
    policy: &P,
    rng: &mut R,
) -> Result<Vec<EpisodeRecord>>
where
    P: SkipPolicy + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    seed_buffer(&spec, buf, rng)?;
    let mut opt = EnsembleOptimizer::new(model, cfg.train.clone())?;
    let mut records = Vec::with_capacity(cfg.n_iterations);
    for _ in 0..cfg.n_iterations {
        if cfg.train_model {
            fit(model, buf, &mut opt, rng)?;
        }
        records.push(aui_episode(&spec, &cfg.planner, &*model, policy, buf, rng)?);
    }
    Ok(records)
}

/// Acting-upon-imagination loop with the policy from `cfg.skip`. FSA needs
/// the step-0 error model.
pub fn run_aui<R: Rng + ?Sized>(
    cfg: &AgentConfig,
    model: &mut EnsembleModel,
    buf: &mut ReplayBuffer,
    errors: Option<&ErrorModel>,
    rng: &mut R,
) -> Result<Vec<EpisodeRecord>> {
    let spec = cfg.env_spec()?;
    let policy = cfg.skip.build(spec.plan_horizon, errors)?;
    run_aui_with(cfg, model, buf, &policy, rng)
}

/// One point of the online-training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineIteration {
    pub iteration: usize,
    /// Seconds since the run started, measured after the iteration.
    pub wall_seconds: f64,
    pub reward: f64,
    pub recalc_count: usize,
    pub recalc_pct: f64,
    pub error_mean: f64,
    pub error_std: f64,
}

/// Train from scratch while acting on imagination, reporting reward,
/// planner use and prediction error after every iteration. Skipping is
/// never applied during the random seeding episode.
pub fn run_online_skipping<R: Rng + ?Sized>(cfg: &AgentConfig, rng: &mut R) -> Result<Vec<OnlineIteration>> {
    if !cfg.train_model {
        return Err(Error::config("online skipping requires train_model = true"));
    }
    if cfg.skip.kind == SkipKind::Fsa {
        return Err(Error::config("online skipping supports nskip and cb policies"));
    }
    cfg.validate()?;
    let spec = cfg.env_spec()?;
    let policy = cfg.skip.build(spec.plan_horizon, None)?;
    let start = Instant::now();
    let mut model = cfg.new_model(rng)?;
    let mut buf = ReplayBuffer::new();
    seed_buffer(&spec, &mut buf, rng)?;
    let mut opt = EnsembleOptimizer::new(&model, cfg.train.clone())?;
    let mut out = Vec::with_capacity(cfg.n_iterations);
    for iteration in 0..cfg.n_iterations {
        fit(&mut model, &buf, &mut opt, rng)?;
        let rec = aui_episode(&spec, &cfg.planner, &model, &policy, &mut buf, rng)?;
        let (error_mean, error_std) = mean_std(&rec.step_errors);
        out.push(OnlineIteration {
            iteration,
            wall_seconds: start.elapsed().as_secs_f64(),
            reward: rec.total_reward,
            recalc_count: rec.recalc_count,
            recalc_pct: 100.0 * rec.recalc_count as f64 / rec.steps() as f64,
            error_mean,
            error_std,
        });
    }
    Ok(out)
}

/// Outcome of the pre-training protocol.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: EnsembleModel,
    pub buffer: ReplayBuffer,
    /// Final-episode reward of each run, in seed order.
    pub final_rewards: Vec<f64>,
    pub best_run: usize,
}

/// Run the plan-every-step loop from scratch once per seed and keep the
/// model whose final episode scored highest (first wins ties).
pub fn pretrain(cfg: &AgentConfig, seeds: &[u64]) -> Result<Pretrained> {
    if seeds.is_empty() {
        return Err(Error::config("pretraining needs at least one seed"));
    }
    let mut best: Option<Pretrained> = None;
    let mut final_rewards = Vec::with_capacity(seeds.len());
    for (run, &seed) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run_cfg = AgentConfig { seed, train_model: true, ..cfg.clone() };
        let mut model = run_cfg.new_model(&mut rng)?;
        let mut buffer = ReplayBuffer::new();
        let records = run_mbrl(&run_cfg, &mut model, &mut buffer, &mut rng)?;
        let reward = records.last().map_or(f64::NEG_INFINITY, |r| r.total_reward);
        final_rewards.push(reward);
        let better = best.as_ref().is_none_or(|b| reward > b.final_rewards[b.best_run]);
        if better {
            best = Some(Pretrained { model, buffer, final_rewards: Vec::new(), best_run: run });
        }
        if let Some(b) = best.as_mut() {
            b.final_rewards = final_rewards.clone();
        }
    }
    Ok(best.expect("at least one run"))
}

/// Step-0 errors of every recorded transition: the distance between the
/// recorded next state and the mean of `particles` one-step particle
/// predictions from the recorded state and action.
pub fn step0_errors<M, R>(model: &M, buf: &ReplayBuffer, particles: usize, rng: &mut R) -> Result<Vec<f64>>
where
    M: DeltaModel + ?Sized,
    R: Rng + ?Sized,
{
    if buf.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    buf.iter()
        .map(|tr| {
            let mut ps = ParticleSet::new(&tr.s, particles, model.num_members())?;
            ps.propagate(&tr.a, model, rng)?;
            let mean = crate::dynamics::aggregate_confidence(&ps)
                .map(|(m, _)| m)
                .or_else(|_| Ok::<_, Error>(ps.states().row(0).to_vec()))?;
            euclidean_error(&tr.s_next, &mean)
        })
        .collect()
}

/// Error model for FSA from the pre-training buffer.
pub fn error_model_from_buffer<M, R>(
    model: &M,
    buf: &ReplayBuffer,
    particles: usize,
    significance: f64,
    rng: &mut R,
) -> Result<ErrorModel>
where
    M: DeltaModel + ?Sized,
    R: Rng + ?Sized,
{
    build_error_model(&step0_errors(model, buf, particles, rng)?, significance)
}
