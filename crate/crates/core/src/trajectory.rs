use crate::error::{Error, Result};
use crate::types::{ActionVec, StateVec};

/// A planned action sequence together with what the model expects to
/// happen while it is executed.
///
/// Element `i` holds the action to execute `i` steps after planning, the
/// predicted state after that action, the per-dimension std of that
/// prediction and the predicted reward for the action.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedTrajectory {
    origin_state: StateVec,
    actions: Vec<ActionVec>,
    pred_states: Vec<StateVec>,
    pred_sigmas: Vec<Vec<f64>>,
    pred_rewards: Vec<f64>,
    cursor: usize,
}

/// One consumed element of an [`ImaginedTrajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    /// Position inside the trajectory, i.e. steps executed from it before this one.
    pub index: usize,
    pub action: ActionVec,
    pub pred_state: StateVec,
    pub pred_sigma: Vec<f64>,
    pub pred_reward: f64,
}

impl ImaginedTrajectory {
    pub fn new(
        origin_state: StateVec,
        actions: Vec<ActionVec>,
        pred_states: Vec<StateVec>,
        pred_sigmas: Vec<Vec<f64>>,
        pred_rewards: Vec<f64>,
    ) -> Result<Self> {
        let h = actions.len();
        if h == 0 {
            return Err(Error::invalid("trajectory must have at least one step"));
        }
        if pred_states.len() != h || pred_sigmas.len() != h || pred_rewards.len() != h {
            return Err(Error::invalid("trajectory sequences differ in length"));
        }
        if pred_sigmas.iter().flatten().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("predicted sigmas must be non-negative"));
        }
        Ok(Self { origin_state, actions, pred_states, pred_sigmas, pred_rewards, cursor: 0 })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.horizon() - self.cursor
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor == self.horizon()
    }

    pub fn origin_state(&self) -> &StateVec {
        &self.origin_state
    }

    pub fn actions(&self) -> &[ActionVec] {
        &self.actions
    }

    pub fn pred_states(&self) -> &[StateVec] {
        &self.pred_states
    }

    pub fn pred_sigmas(&self) -> &[Vec<f64>] {
        &self.pred_sigmas
    }

    pub fn pred_rewards(&self) -> &[f64] {
        &self.pred_rewards
    }

    /// Hand out the next unexecuted element and move past it.
    pub fn advance(&mut self) -> Result<TrajectoryStep> {
        if self.is_exhausted() {
            return Err(Error::ExhaustedTrajectory);
        }
        let i = self.cursor;
        self.cursor += 1;
        Ok(TrajectoryStep {
            index: i,
            action: self.actions[i].clone(),
            pred_state: self.pred_states[i].clone(),
            pred_sigma: self.pred_sigmas[i].clone(),
            pred_reward: self.pred_rewards[i],
        })
    }
}
