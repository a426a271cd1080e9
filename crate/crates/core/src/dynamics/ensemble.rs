use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{GaussianNet, LogVarBounds};
use crate::buffer::ReplayBuffer;
use crate::error::{check_dim, Error, Result};
use crate::types::snap;

/// Anything that predicts a Gaussian over state deltas per ensemble member.
///
/// Implementations must be pure so particle rollouts can run on several
/// threads against one shared model.
pub trait DeltaModel: Sync {
    fn num_members(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// Predict `(mean of s' - s, variance)` for each row, in state units.
    fn predict(&self, member: usize, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>);
}

/// Shape and output bounds of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub members: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let b = LogVarBounds::default();
        Self { members: 5, hidden: 64, hidden_layers: 2, logvar_min: b.min, logvar_max: b.max }
    }
}

impl ModelConfig {
    pub fn bounds(&self) -> LogVarBounds {
        LogVarBounds { min: self.logvar_min, max: self.logvar_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::config("an ensemble needs at least two members"));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        if !(self.logvar_min <= self.logvar_max) {
            return Err(Error::config("logvar_min must not exceed logvar_max"));
        }
        Ok(())
    }

    /// `[inputs, hidden.., 2 * state_dim]`, where each angle coordinate
    /// contributes two inputs.
    pub fn layer_sizes(&self, state_dim: usize, action_dim: usize, angle_dims: usize) -> Vec<usize> {
        let mut sizes = vec![state_dim + angle_dims + action_dim];
        sizes.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        sizes.push(2 * state_dim);
        sizes
    }
}

fn check_angle_dims(angle_dims: &[usize], state_dim: usize) -> Result<()> {
    if angle_dims.windows(2).any(|w| w[0] >= w[1]) || angle_dims.iter().any(|&d| d >= state_dim) {
        return Err(Error::invalid("angle dimensions must be increasing and within the state"));
    }
    Ok(())
}

/// Affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: Array1::zeros(dim), std: Array1::ones(dim) }
    }

    /// Column statistics of `data`; near-constant columns get unit scale.
    /// Values are rounded to single precision so checkpoints are lossless.
    pub fn fit(data: ArrayView2<f64>) -> Self {
        let mean = data.mean_axis(Axis(0)).expect("non-empty data").mapv(snap);
        let std = data.std_axis(Axis(0), 0.0).mapv(|s| if s < 1e-6 { 1.0 } else { snap(s) });
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Bootstrap ensemble of [`GaussianNet`]s trained on state deltas.
///
/// State coordinates listed in `angle_dims` enter the networks as
/// `(sin, cos)` pairs; targets stay raw deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    state_dim: usize,
    action_dim: usize,
    angle_dims: Vec<usize>,
    members: Vec<GaussianNet>,
    input_norm: Normalizer,
    target_norm: Normalizer,
}

impl EnsembleModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        angle_dims: &[usize],
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        check_angle_dims(angle_dims, state_dim)?;
        let sizes = cfg.layer_sizes(state_dim, action_dim, angle_dims.len());
        let members =
            (0..cfg.members).map(|_| GaussianNet::new(&sizes, cfg.bounds(), rng)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            state_dim,
            action_dim,
            angle_dims: angle_dims.to_vec(),
            members,
            input_norm: Normalizer::identity(sizes[0]),
            target_norm: Normalizer::identity(state_dim),
        })
    }

    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        angle_dims: Vec<usize>,
        members: Vec<GaussianNet>,
        input_norm: Normalizer,
        target_norm: Normalizer,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::invalid("an ensemble needs at least two members"));
        }
        check_angle_dims(&angle_dims, state_dim)?;
        let sizes = members[0].sizes();
        if members.iter().any(|m| m.sizes() != sizes) {
            return Err(Error::invalid("ensemble members must share one architecture"));
        }
        let width = state_dim + angle_dims.len() + action_dim;
        check_dim(width, members[0].input_dim())?;
        check_dim(state_dim, members[0].output_dim())?;
        check_dim(width, input_norm.dim())?;
        check_dim(state_dim, target_norm.dim())?;
        Ok(Self { state_dim, action_dim, angle_dims, members, input_norm, target_norm })
    }

    pub fn angle_dims(&self) -> &[usize] {
        &self.angle_dims
    }

    /// Network inputs for `(s, a)` rows before normalization.
    pub fn features(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
        let n = states.nrows();
        let width = self.state_dim + self.angle_dims.len() + self.action_dim;
        let mut x = Array2::zeros((n, width));
        for r in 0..n {
            let mut c = 0;
            for (j, &v) in states.row(r).iter().enumerate() {
                if self.angle_dims.contains(&j) {
                    let (sin, cos) = v.sin_cos();
                    x[[r, c]] = sin;
                    x[[r, c + 1]] = cos;
                    c += 2;
                } else {
                    x[[r, c]] = v;
                    c += 1;
                }
            }
            for &v in actions.row(r) {
                x[[r, c]] = v;
                c += 1;
            }
        }
        x
    }

    pub fn members(&self) -> &[GaussianNet] {
        &self.members
    }

    pub(crate) fn members_mut(&mut self) -> &mut [GaussianNet] {
        &mut self.members
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.members[0].sizes()
    }

    pub fn bounds(&self) -> LogVarBounds {
        self.members[0].bounds()
    }

    pub fn input_norm(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn target_norm(&self) -> &Normalizer {
        &self.target_norm
    }

    /// Refit both normalizers to the buffer contents.
    pub fn fit_normalizers(&mut self, buf: &ReplayBuffer) -> Result<()> {
        if buf.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let (x, y) = self.training_arrays(buf, None)?;
        self.input_norm = Normalizer::fit(x.view());
        self.target_norm = Normalizer::fit(y.view());
        Ok(())
    }

    /// Unnormalized network inputs and `s' - s` targets for the given
    /// transition indices (all of them when `None`).
    pub(crate) fn training_arrays(
        &self,
        buf: &ReplayBuffer,
        idx: Option<&[usize]>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let ds = self.state_dim;
        let da = self.action_dim;
        let n = idx.map_or(buf.len(), <[usize]>::len);
        let mut s = Array2::zeros((n, ds));
        let mut a = Array2::zeros((n, da));
        let mut y = Array2::zeros((n, ds));
        for r in 0..n {
            let i = idx.map_or(r, |v| v[r]);
            let tr = buf.get(i).ok_or_else(|| Error::invalid("transition index out of range"))?;
            check_dim(ds, tr.s.dim())?;
            check_dim(da, tr.a.dim())?;
            s.row_mut(r).assign(&ndarray::ArrayView1::from(tr.s.as_slice()));
            a.row_mut(r).assign(&ndarray::ArrayView1::from(tr.a.as_slice()));
            for (c, v) in tr.delta().into_iter().enumerate() {
                y[[r, c]] = v;
            }
        }
        Ok((self.features(s.view(), a.view()), y))
    }

    pub(crate) fn normalize_inputs(&self, x: &mut Array2<f64>) {
        *x -= &self.input_norm.mean;
        *x /= &self.input_norm.std;
    }

    pub(crate) fn normalize_targets(&self, y: &mut Array2<f64>) {
        *y -= &self.target_norm.mean;
        *y /= &self.target_norm.std;
    }
}

impl DeltaModel for EnsembleModel {
    fn num_members(&self) -> usize {
        self.members.len()
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn predict(&self, member: usize, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut x = self.features(states, actions);
        self.normalize_inputs(&mut x);
        let out = self.members[member].forward(x.view());
        let mut mean = out.mean;
        mean *= &self.target_norm.std;
        mean += &self.target_norm.mean;
        let scale = self.target_norm.std.mapv(|s| s * s);
        let mut var = out.logvar.mapv(f64::exp);
        var *= &scale;
        (mean, var)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::buffer::Transition;
    use crate::types::{ActionVec, StateVec};

    #[test]
    fn members_differ_only_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = EnsembleModel::new(4, 1, &[], &ModelConfig::default(), &mut rng).unwrap();
        assert_eq!(m.num_members(), 5);
        assert_eq!(m.layer_sizes(), vec![5, 64, 64, 8]);
        assert!(m.members().windows(2).all(|w| w[0].sizes() == w[1].sizes() && w[0] != w[1]));
    }

    #[test]
    fn single_member_is_rejected() {
        let cfg = ModelConfig { members: 1, ..Default::default() };
        assert!(EnsembleModel::new(2, 1, &[], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn normalizer_maps_columns_to_unit_scale() {
        let mut buf = ReplayBuffer::new();
        for i in 0..10 {
            let x = i as f64;
            buf.push(
                Transition::new(
                    StateVec::new(vec![x, 5.0]).unwrap(),
                    ActionVec::new(vec![2.0 * x]).unwrap(),
                    StateVec::new(vec![x + 0.5 * x, 5.0]).unwrap(),
                    0.0,
                )
                .unwrap(),
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = EnsembleModel::new(2, 1, &[], &ModelConfig { hidden: 4, ..Default::default() }, &mut rng).unwrap();
        m.fit_normalizers(&buf).unwrap();
        let (mut x, _) = m.training_arrays(&buf, None).unwrap();
        m.normalize_inputs(&mut x);
        let mean = x.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-6));
        // constant column keeps unit scale
        assert_eq!(m.input_norm().std[1], 1.0);
        assert!((x.column(0).std(0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn angles_enter_as_sin_cos() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = EnsembleModel::new(3, 1, &[1], &ModelConfig { hidden: 4, ..Default::default() }, &mut rng).unwrap();
        assert_eq!(m.layer_sizes()[0], 5);
        let s = Array2::from_shape_vec((1, 3), vec![0.5, std::f64::consts::FRAC_PI_2, -2.0]).unwrap();
        let a = Array2::from_elem((1, 1), 0.25);
        let x = m.features(s.view(), a.view());
        assert_eq!(x.row(0).to_vec(), vec![0.5, 1.0, std::f64::consts::FRAC_PI_2.cos(), -2.0, 0.25]);
        assert!(EnsembleModel::new(3, 1, &[3], &ModelConfig::default(), &mut rng).is_err());
    }
}
