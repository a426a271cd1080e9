//! Probabilistic ensemble dynamics: Gaussian MLPs trained on state deltas,
//! bootstrap ensembles and particle rollouts.

mod ensemble;
mod net;
mod particles;
mod train;

use ndarray::{Array2, ArrayView2};

pub use ensemble::{DeltaModel, EnsembleModel, ModelConfig, Normalizer};
pub use net::{nll_loss, Dense, GaussianNet, GaussianOutput, LogVarBounds};
pub use particles::{aggregate_confidence, variance_decompose, ParticleSet};
pub use train::{fit, train_epoch, EnsembleOptimizer, TrainConfig, TrainReport};

pub(crate) use particles::{mean_and_std, predict_assigned, rows_by_member, sample_into};

/// Model whose members each predict a fixed delta and variance regardless
/// of input. With zero deltas it is the identity dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    action_dim: usize,
    deltas: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl ConstantModel {
    pub fn new(action_dim: usize, deltas: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Self {
        assert!(!deltas.is_empty() && deltas.len() == variances.len());
        Self { action_dim, deltas, variances }
    }

    /// `members` copies of a zero-delta, zero-variance member.
    pub fn identity(state_dim: usize, action_dim: usize, members: usize) -> Self {
        Self::new(action_dim, vec![vec![0.0; state_dim]; members], vec![vec![0.0; state_dim]; members])
    }
}

impl DeltaModel for ConstantModel {
    fn num_members(&self) -> usize {
        self.deltas.len()
    }

    fn state_dim(&self) -> usize {
        self.deltas[0].len()
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn predict(&self, member: usize, states: ArrayView2<f64>, _actions: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let n = states.nrows();
        let d = self.state_dim();
        let mean = Array2::from_shape_fn((n, d), |(_, c)| self.deltas[member][c]);
        let var = Array2::from_shape_fn((n, d), |(_, c)| self.variances[member][c]);
        (mean, var)
    }
}

/// The true dynamics of a task, replicated over `members` identical
/// noise-free members. Useful as an upper reference for learned models.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactModel {
    spec: crate::envs::EnvSpec,
    members: usize,
}

impl ExactModel {
    pub fn new(spec: crate::envs::EnvSpec, members: usize) -> Self {
        assert!(members > 0);
        Self { spec, members }
    }
}

impl DeltaModel for ExactModel {
    fn num_members(&self) -> usize {
        self.members
    }

    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.spec.action_dim()
    }

    fn predict(&self, _member: usize, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (n, d) = states.dim();
        let mut mean = Array2::zeros((n, d));
        for (r, (s, a)) in states.rows().into_iter().zip(actions.rows()).enumerate() {
            let s = s.to_vec();
            let next = self.spec.transition(&s, &a.to_vec());
            for c in 0..d {
                mean[[r, c]] = next[c] - s[c];
            }
        }
        (mean, Array2::zeros((n, d)))
    }
}
