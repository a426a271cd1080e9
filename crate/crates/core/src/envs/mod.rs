//! Analytic control tasks with known reward functions.
//!
//! All three tasks integrate their ODE with fixed-step RK4 and are pure
//! functions of `(state, action)`. Observations are rounded to single
//! precision after every step.

mod cartpole;
mod pendulum;
mod reacher;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::{snap_all, ActionBounds, ActionVec, StateVec};

pub use cartpole::{CART_MASS, CART_POLE_FORCE_LIMIT, POLE_LENGTH, POLE_MASS};
pub use pendulum::{PENDULUM_LENGTH, PENDULUM_MASS, PENDULUM_TORQUE_LIMIT};
pub use reacher::{LINK_LENGTHS, LINK_MASSES, REACHER_DAMPING, REACHER_TORQUE_LIMIT};

pub const GRAVITY: f64 = 9.81;

/// Half-width of the uniform start-state perturbation.
pub const DEFAULT_START_PERTURBATION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Cartpole,
    Pendulum,
    Reacher2,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Cartpole => "cartpole",
            EnvKind::Pendulum => "pendulum",
            EnvKind::Reacher2 => "reacher2",
        }
    }

    pub const ALL: [EnvKind; 3] = [EnvKind::Cartpole, EnvKind::Pendulum, EnvKind::Reacher2];
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvKind::Cartpole),
            "pendulum" => Ok(EnvKind::Pendulum),
            "reacher2" => Ok(EnvKind::Reacher2),
            other => Err(Error::config(format!("unknown environment {other:?}"))),
        }
    }
}

/// Static description of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub task_horizon: usize,
    pub plan_horizon: usize,
    pub dt: f64,
    pub action_bounds: ActionBounds,
    pub start_perturbation: f64,
}

impl EnvSpec {
    pub fn cartpole() -> Self {
        Self {
            kind: EnvKind::Cartpole,
            task_horizon: 200,
            plan_horizon: 25,
            dt: 0.05,
            action_bounds: ActionBounds::symmetric(CART_POLE_FORCE_LIMIT, 1),
            start_perturbation: DEFAULT_START_PERTURBATION,
        }
    }

    pub fn pendulum() -> Self {
        Self {
            kind: EnvKind::Pendulum,
            task_horizon: 200,
            plan_horizon: 25,
            dt: 0.05,
            action_bounds: ActionBounds::symmetric(PENDULUM_TORQUE_LIMIT, 1),
            start_perturbation: DEFAULT_START_PERTURBATION,
        }
    }

    pub fn reacher2() -> Self {
        Self {
            kind: EnvKind::Reacher2,
            task_horizon: 150,
            plan_horizon: 25,
            dt: 0.02,
            action_bounds: ActionBounds::symmetric(REACHER_TORQUE_LIMIT, 2),
            start_perturbation: DEFAULT_START_PERTURBATION,
        }
    }

    pub fn new(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Cartpole => Self::cartpole(),
            EnvKind::Pendulum => Self::pendulum(),
            EnvKind::Reacher2 => Self::reacher2(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn with_task_horizon(mut self, task_horizon: usize) -> Result<Self> {
        self.task_horizon = task_horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.plan_horizon == 0 || self.plan_horizon > self.task_horizon {
            return Err(Error::config(format!(
                "plan horizon {} must be in 1..={}",
                self.plan_horizon, self.task_horizon
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        if !(self.start_perturbation >= 0.0) {
            return Err(Error::config("start perturbation must be non-negative"));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::Cartpole => 4,
            EnvKind::Pendulum => 3,
            EnvKind::Reacher2 => 6,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_bounds.dim()
    }

    pub fn nominal_start(&self) -> Vec<f64> {
        match self.kind {
            EnvKind::Cartpole => cartpole::nominal_start(),
            EnvKind::Pendulum => pendulum::nominal_start(),
            EnvKind::Reacher2 => reacher::nominal_start(),
        }
    }

    /// Known reward of taking action `a` in state `s`.
    pub fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        match self.kind {
            EnvKind::Cartpole => cartpole::reward(s, a),
            EnvKind::Pendulum => pendulum::reward(s, a),
            EnvKind::Reacher2 => reacher::reward(s, a),
        }
    }

    /// Checked variant of [`EnvSpec::reward`].
    pub fn reward_fn(&self, s: &StateVec, a: &ActionVec) -> Result<f64> {
        check_dim(self.state_dim(), s.dim())?;
        check_dim(self.action_dim(), a.dim())?;
        Ok(self.reward(s, a))
    }

    /// State coordinates that are angles (periodic in 2π).
    pub fn angle_dims(&self) -> &'static [usize] {
        match self.kind {
            EnvKind::Cartpole => &[2],
            EnvKind::Pendulum => &[],
            EnvKind::Reacher2 => &[0, 1],
        }
    }

    /// Largest value the reward can take.
    pub fn reward_upper_bound(&self) -> f64 {
        match self.kind {
            EnvKind::Cartpole => 1.0,
            EnvKind::Pendulum | EnvKind::Reacher2 => 0.0,
        }
    }

    /// Advance `s` by one `dt` under action `a` (assumed within bounds).
    pub fn transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut next = match self.kind {
            EnvKind::Cartpole => rk4(s, self.dt, |x, out| cartpole::derivative(x, a[0], out)),
            EnvKind::Pendulum => pendulum::step(s, a[0], self.dt),
            EnvKind::Reacher2 => rk4(s, self.dt, |x, out| reacher::derivative(x, a, out)),
        };
        snap_all(&mut next);
        next
    }
}

/// One classical fourth-order Runge-Kutta step of `x' = f(x)`.
pub fn rk4<F>(x: &[f64], dt: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    (0..n).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// A running episode of a task.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    spec: EnvSpec,
    state: StateVec,
    step_count: usize,
    clamp_warnings: usize,
}

impl EnvInstance {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let state = StateVec::new(spec.nominal_start())?.snapped();
        Ok(Self { spec, state, step_count: 0, clamp_warnings: 0 })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> &StateVec {
        &self.state
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Number of actions that had to be clamped into bounds.
    pub fn clamp_warnings(&self) -> usize {
        self.clamp_warnings
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= self.spec.task_horizon
    }

    /// Nominal start plus a uniform perturbation, deterministic in `seed`.
    pub fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.spec.start_perturbation;
        let mut noise = || if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        let mut s = match self.spec.kind {
            EnvKind::Pendulum => pendulum::perturbed_start(&mut noise),
            _ => self.spec.nominal_start().into_iter().map(|x| x + noise()).collect(),
        };
        snap_all(&mut s);
        self.state = StateVec::from_vec_unchecked(s);
        self.step_count = 0;
        self.clamp_warnings = 0;
        self.state.clone()
    }

    /// Execute `a`, returning the next state and the reward of `(s, a)`.
    pub fn step(&mut self, a: &[f64]) -> Result<(StateVec, f64)> {
        if self.is_done() {
            return Err(Error::EpisodeFinished(self.step_count));
        }
        let (a, clamped) = self.spec.action_bounds.clamp(a)?;
        if clamped {
            self.clamp_warnings += 1;
        }
        let reward = self.spec.reward(&self.state, &a);
        let next = self.spec.transition(&self.state, &a);
        self.state = StateVec::new(next)?;
        self.step_count += 1;
        Ok((self.state.clone(), reward))
    }
}
