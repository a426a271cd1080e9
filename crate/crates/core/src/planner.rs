//! Cross-entropy-method trajectory optimization through particle rollouts.
//!
//! Each CEM iteration samples `population` action sequences from a
//! per-step Gaussian, scores every sequence by the mean particle reward
//! summed over the horizon, and refits the Gaussian to the elites. The
//! final mean is rolled out once more to record the predicted states,
//! their spread and the predicted rewards.
//!
//! Candidate `k` of iteration `i` draws all of its randomness (actions and
//! particle noise) from its own stream, so the result does not depend on
//! how candidates are split across threads.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mean_and_std, predict_assigned, rows_by_member, sample_into, DeltaModel, ParticleSet};
use crate::envs::EnvSpec;
use crate::error::{check_dim, Error, Result};
use crate::trajectory::ImaginedTrajectory;
use crate::types::{ActionBounds, ActionVec, StateVec};

/// What the planner needs to know about a task.
pub trait PlanningTask: Sync {
    fn horizon(&self) -> usize;
    fn action_bounds(&self) -> &ActionBounds;
    fn reward(&self, s: &[f64], a: &[f64]) -> f64;
}

impl PlanningTask for EnvSpec {
    fn horizon(&self) -> usize {
        self.plan_horizon
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.action_bounds
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        EnvSpec::reward(self, s, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    /// Candidate sequences per iteration (K).
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Initial std as a fraction of each action dimension's range.
    pub init_std_fraction: f64,
    pub min_std: f64,
    /// Weight of the previous distribution when refitting.
    pub alpha: f64,
    /// Particles per rollout (P); must be a multiple of the ensemble size.
    pub particles: usize,
    /// Per-step reward discount.
    pub gamma: f64,
    /// Start from the previous plan shifted by one step instead of the
    /// action-range center.
    pub warm_start: bool,
    /// Score candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 200,
            elites: 20,
            iterations: 5,
            init_std_fraction: 0.25,
            min_std: 1e-3,
            alpha: 0.1,
            particles: 20,
            gamma: 1.0,
            warm_start: false,
            parallel: false,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::config(format!("elites must be in 1..={}", self.population)));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be at least 1"));
        }
        if !(self.min_std > 0.0) {
            return Err(Error::config("min_std must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha must be in [0, 1]"));
        }
        if !(self.init_std_fraction > 0.0) {
            return Err(Error::config("init_std_fraction must be positive"));
        }
        if self.particles == 0 {
            return Err(Error::config("particles must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Independent per-step Gaussians over an `H x d_a` action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

impl ActionDistribution {
    /// Centered on the action range (or on `mean`), with the configured
    /// initial spread.
    pub fn initial(bounds: &ActionBounds, horizon: usize, cfg: &CemConfig, mean: Option<&Array2<f64>>) -> Result<Self> {
        let d = bounds.dim();
        let mean = match mean {
            Some(m) => {
                if m.dim() != (horizon, d) {
                    return Err(Error::invalid("warm-start mean has the wrong shape"));
                }
                Array2::from_shape_fn((horizon, d), |(t, j)| m[[t, j]].clamp(bounds.low()[j], bounds.high()[j]))
            }
            None => {
                let c = bounds.center();
                Array2::from_shape_fn((horizon, d), |(_, j)| c[j])
            }
        };
        let range = bounds.range();
        let std = Array2::from_shape_fn((horizon, d), |(_, j)| (cfg.init_std_fraction * range[j]).max(cfg.min_std));
        Ok(Self { mean, std })
    }

    pub fn horizon(&self) -> usize {
        self.mean.nrows()
    }

    fn sample<R: Rng + ?Sized>(&self, bounds: &ActionBounds, rng: &mut R) -> Array2<f64> {
        let (h, d) = self.mean.dim();
        let mut out = Array2::zeros((h, d));
        for t in 0..h {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                out[[t, j]] = (self.mean[[t, j]] + self.std[[t, j]] * z).clamp(bounds.low()[j], bounds.high()[j]);
            }
        }
        out
    }
}

/// Indices of the `count` best scores, best first; ties go to the lower index.
pub fn select_elites(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let key = |i: usize| if scores[i].is_nan() { f64::NEG_INFINITY } else { scores[i] };
    idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    idx.truncate(count);
    idx
}

/// Refit the sampling distribution to the elite samples.
pub fn cem_update(
    dist: &ActionDistribution,
    samples: &[Array2<f64>],
    scores: &[f64],
    cfg: &CemConfig,
) -> Result<ActionDistribution> {
    check_dim(samples.len(), scores.len())?;
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let elites = select_elites(scores, cfg.elites.min(samples.len()));
    let ne = elites.len() as f64;
    let (h, d) = dist.mean.dim();
    let mut mean = Array2::zeros((h, d));
    for &e in &elites {
        check_dim(h * d, samples[e].len())?;
        mean += &samples[e];
    }
    mean /= ne;
    let mut var = Array2::<f64>::zeros((h, d));
    for &e in &elites {
        let diff = &samples[e] - &mean;
        var += &(&diff * &diff);
    }
    var /= ne;
    let a = cfg.alpha;
    let new_mean = &dist.mean * a + &mean * (1.0 - a);
    let new_std = (&dist.std * a + &var.mapv(f64::sqrt) * (1.0 - a)).mapv(|s| s.max(cfg.min_std));
    Ok(ActionDistribution { mean: new_mean, std: new_std })
}

/// Result of rolling one action sequence through the particle model.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub score: f64,
    /// Particle mean after each action.
    pub pred_states: Vec<Vec<f64>>,
    /// Particle std after each action.
    pub pred_sigmas: Vec<Vec<f64>>,
    /// Mean particle reward of each action.
    pub pred_rewards: Vec<f64>,
}

fn check_model<M: DeltaModel + ?Sized>(model: &M, s_init: &[f64], particles: usize) -> Result<()> {
    check_dim(model.state_dim(), s_init.len())?;
    if !particles.is_multiple_of(model.num_members()) {
        return Err(Error::config(format!(
            "particles ({particles}) must be a multiple of the ensemble size ({})",
            model.num_members()
        )));
    }
    Ok(())
}

/// Roll `actions` (`H x d_a`) out from `s_init` with `particles` particles
/// and score it as the (discounted) sum over steps of mean particle reward.
pub fn score_action_sequence<M, T, R>(
    s_init: &[f64],
    actions: ArrayView2<f64>,
    model: &M,
    task: &T,
    particles: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<Rollout>
where
    M: DeltaModel + ?Sized,
    T: PlanningTask + ?Sized,
    R: Rng + ?Sized,
{
    check_model(model, s_init, particles)?;
    check_dim(model.action_dim(), actions.ncols())?;
    let mut ps = ParticleSet::new(s_init, particles, model.num_members())?;
    let h = actions.nrows();
    let mut out = Rollout {
        score: 0.0,
        pred_states: Vec::with_capacity(h),
        pred_sigmas: Vec::with_capacity(h),
        pred_rewards: Vec::with_capacity(h),
    };
    let mut discount = 1.0;
    for t in 0..h {
        let a = actions.row(t);
        let a = a.as_slice().expect("standard layout");
        let r = ps.states().rows().into_iter().map(|s| task.reward(s.as_slice().unwrap(), a)).sum::<f64>()
            / particles as f64;
        out.score += discount * r;
        out.pred_rewards.push(r);
        discount *= gamma;
        ps.propagate(a, model, rng)?;
        let (m, s) = mean_and_std(ps.states().view());
        out.pred_states.push(m);
        out.pred_sigmas.push(s);
    }
    Ok(out)
}

/// Scores for a batch of candidates; candidate `i` uses `rngs[i]` for its
/// particle noise. Equivalent to calling [`score_action_sequence`] on
/// each candidate in turn, but with one network call per member and step.
fn score_batch<M, T>(
    s_init: &[f64],
    candidates: &[Array2<f64>],
    rngs: &mut [ChaCha8Rng],
    model: &M,
    task: &T,
    particles: usize,
    gamma: f64,
) -> Vec<f64>
where
    M: DeltaModel + ?Sized,
    T: PlanningTask + ?Sized,
{
    let k = candidates.len();
    let p = particles;
    let n = k * p;
    let ds = s_init.len();
    let (h, da) = candidates[0].dim();
    let mut states = Array2::from_shape_fn((n, ds), |(_, c)| s_init[c]);
    let assignment: Vec<usize> = (0..n).map(|r| (r % p) % model.num_members()).collect();
    let groups = rows_by_member(&assignment, model.num_members());
    let mut scores = vec![0.0; k];
    let mut actions = Array2::zeros((n, da));
    let mut discount = 1.0;
    for t in 0..h {
        for (c, cand) in candidates.iter().enumerate() {
            let a = cand.row(t);
            let a = a.as_slice().expect("standard layout");
            let mut acc = 0.0;
            for q in 0..p {
                let r = c * p + q;
                acc += task.reward(states.row(r).as_slice().unwrap(), a);
                actions.row_mut(r).assign(&cand.row(t));
            }
            scores[c] += discount * (acc / p as f64);
        }
        discount *= gamma;
        let (mean, var) = predict_assigned(model, states.view(), actions.view(), &groups);
        for (c, rng) in rngs.iter_mut().enumerate() {
            sample_into(&mut states, &mean, &var, c * p..(c + 1) * p, rng);
        }
    }
    scores
}

/// Stream of randomness for candidate `candidate` of iteration `iteration`.
pub fn candidate_rng(base_seed: u64, iteration: usize, candidate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((iteration as u64) << 32) | candidate as u64);
    rng
}

/// Per-iteration diagnostics of a CEM run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub population_mean: f64,
    pub elite_mean: f64,
    pub best: f64,
}

#[derive(Debug, Clone)]
pub struct CemOutcome {
    pub distribution: ActionDistribution,
    pub history: Vec<IterationStats>,
}

/// Run the CEM iterations and return the final sampling distribution.
pub fn cem_optimize<M, T>(
    s_init: &[f64],
    model: &M,
    task: &T,
    cfg: &CemConfig,
    base_seed: u64,
    warm_start: Option<&Array2<f64>>,
) -> Result<CemOutcome>
where
    M: DeltaModel + ?Sized,
    T: PlanningTask + ?Sized,
{
    cfg.validate()?;
    check_model(model, s_init, cfg.particles)?;
    check_dim(model.action_dim(), task.action_bounds().dim())?;
    let bounds = task.action_bounds();
    let mut dist = ActionDistribution::initial(bounds, task.horizon(), cfg, warm_start)?;
    let mut history = Vec::with_capacity(cfg.iterations);
    let k = cfg.population;

    for it in 0..cfg.iterations {
        let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|c| candidate_rng(base_seed, it, c)).collect();
        let samples: Vec<Array2<f64>> = rngs.iter_mut().map(|rng| dist.sample(bounds, rng)).collect();
        let scores = if cfg.parallel {
            let chunk = k.div_ceil(rayon::current_num_threads()).max(1);
            samples
                .par_chunks(chunk)
                .zip(rngs.par_chunks_mut(chunk))
                .flat_map_iter(|(cands, rs)| score_batch(s_init, cands, rs, model, task, cfg.particles, cfg.gamma))
                .collect::<Vec<f64>>()
        } else {
            score_batch(s_init, &samples, &mut rngs, model, task, cfg.particles, cfg.gamma)
        };

        let elites = select_elites(&scores, cfg.elites);
        let elite_mean = elites.iter().map(|&e| scores[e]).sum::<f64>() / elites.len() as f64;
        let population_mean = scores.iter().sum::<f64>() / k as f64;
        debug_assert!(elite_mean >= population_mean - 1e-9 * population_mean.abs().max(1.0));
        history.push(IterationStats { population_mean, elite_mean, best: scores[elites[0]] });

        dist = cem_update(&dist, &samples, &scores, cfg)?;
    }
    Ok(CemOutcome { distribution: dist, history })
}

/// Plan from `s_init`: optimize with CEM, then roll the final mean out once
/// more to record predictions. All randomness derives from one `u64` drawn
/// from `rng`.
pub fn compute_optimal_trajectory<M, T, R>(
    s_init: &StateVec,
    model: &M,
    task: &T,
    cfg: &CemConfig,
    rng: &mut R,
    warm_start: Option<&Array2<f64>>,
) -> Result<ImaginedTrajectory>
where
    M: DeltaModel + ?Sized,
    T: PlanningTask + ?Sized,
    R: Rng + ?Sized,
{
    let base_seed: u64 = rng.random();
    let outcome = cem_optimize(s_init, model, task, cfg, base_seed, warm_start)?;
    let bounds = task.action_bounds();
    let actions = outcome
        .distribution
        .mean
        .rows()
        .into_iter()
        .map(|row| bounds.clamp(row.as_slice().unwrap()).map(|(a, _)| a))
        .collect::<Result<Vec<ActionVec>>>()?;
    let h = actions.len();
    let d = bounds.dim();
    let matrix = Array2::from_shape_fn((h, d), |(t, j)| actions[t][j]);
    let mut final_rng = candidate_rng(base_seed, cfg.iterations, 0);
    let rollout = score_action_sequence(s_init, matrix.view(), model, task, cfg.particles, cfg.gamma, &mut final_rng)?;
    let pred_states = rollout.pred_states.into_iter().map(StateVec::new).collect::<Result<Vec<_>>>()?;
    ImaginedTrajectory::new(s_init.clone(), actions, pred_states, rollout.pred_sigmas, rollout.pred_rewards)
}

/// Unexecuted part of a plan, padded with its last action, for
/// warm-starting the next CEM run.
pub fn shifted_mean(traj: &ImaginedTrajectory) -> Array2<f64> {
    let acts = traj.actions();
    let h = acts.len();
    let d = acts[0].dim();
    let from = traj.cursor();
    Array2::from_shape_fn((h, d), |(t, j)| acts[(from + t).min(h - 1)][j])
}
