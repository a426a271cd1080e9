use ndarray::{Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleModel;
use super::net::{Dense, GaussianNet};
use crate::buffer::ReplayBuffer;
use crate::error::{Error, Result};
use crate::types::snap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Passes over each member's bootstrap resample per training call.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("invalid optimizer hyperparameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl AdamState {
    fn new(net: &GaussianNet) -> Self {
        let zeros: Vec<Dense> = net.layers().iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// Per-member adaptive moment estimation state.
#[derive(Debug, Clone)]
pub struct EnsembleOptimizer {
    cfg: TrainConfig,
    states: Vec<AdamState>,
}

impl EnsembleOptimizer {
    pub fn new(model: &EnsembleModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { states: model.members().iter().map(AdamState::new).collect(), cfg })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn step(&mut self, member: usize, net: &mut GaussianNet, grads: &[Dense]) {
        let c = &self.cfg;
        let st = &mut self.states[member];
        st.t += 1;
        let bc1 = 1.0 - c.beta1.powi(st.t);
        let bc2 = 1.0 - c.beta2.powi(st.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let step = c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            *p = snap(*p - step);
        };
        for ((layer, g), (m, v)) in net.layers_mut().iter_mut().zip(grads).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
            Zip::from(&mut layer.w).and(&mut m.w).and(&mut v.w).and(&g.w).for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.b).and(&mut m.b).and(&mut v.b).and(&g.b).for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// One shuffled minibatch pass of `member` over rows `idx` of `(x, y)`.
/// Returns the mean per-sample loss.
fn run_pass<R: Rng + ?Sized>(
    net: &mut GaussianNet,
    member: usize,
    opt: &mut EnsembleOptimizer,
    x: &Array2<f64>,
    y: &Array2<f64>,
    idx: &[usize],
    rng: &mut R,
) -> f64 {
    let mut order = idx.to_vec();
    order.shuffle(rng);
    let bs = opt.cfg.batch_size;
    let mut total = 0.0;
    for batch in order.chunks(bs) {
        let xb = x.select(Axis(0), batch);
        let yb = y.select(Axis(0), batch);
        let (loss, grads) = net.loss_and_grad(xb.view(), yb.view());
        opt.step(member, net, &grads);
        total += loss * batch.len() as f64;
    }
    total / order.len() as f64
}

fn normalized_arrays(model: &EnsembleModel, buf: &ReplayBuffer) -> Result<(Array2<f64>, Array2<f64>)> {
    let (mut x, mut y) = model.training_arrays(buf, None)?;
    model.normalize_inputs(&mut x);
    model.normalize_targets(&mut y);
    Ok((x, y))
}

fn check_data(buf: &ReplayBuffer, opt: &EnsembleOptimizer, model: &EnsembleModel) -> Result<()> {
    let needed = opt.cfg.batch_size;
    if buf.len() < needed {
        return Err(Error::InsufficientData { needed, got: buf.len() });
    }
    if opt.states.len() != model.members().len() {
        return Err(Error::invalid("optimizer was built for a different ensemble"));
    }
    Ok(())
}

/// One epoch: every member draws its own bootstrap resample of the buffer
/// and makes one minibatch pass over it. Returns per-member mean NLL.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut EnsembleModel,
    buf: &ReplayBuffer,
    opt: &mut EnsembleOptimizer,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_data(buf, opt, model)?;
    let (x, y) = normalized_arrays(model, buf)?;
    let n = buf.len();
    let mut losses = Vec::with_capacity(model.members().len());
    for b in 0..model.members().len() {
        let idx = buf.bootstrap_indices(rng, n)?;
        let net = &mut model.members_mut()[b];
        losses.push(run_pass(net, b, opt, &x, &y, &idx, rng));
    }
    Ok(losses)
}

/// Per-epoch, per-member mean losses of a [`fit`] call.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<Vec<f64>>,
}

impl TrainReport {
    pub fn final_mean_loss(&self) -> Option<f64> {
        self.epoch_losses.last().map(|l| l.iter().sum::<f64>() / l.len() as f64)
    }
}

/// Full training call: refit normalizers to the buffer, draw one bootstrap
/// resample per member and run `epochs` passes over it.
pub fn fit<R: Rng + ?Sized>(
    model: &mut EnsembleModel,
    buf: &ReplayBuffer,
    opt: &mut EnsembleOptimizer,
    rng: &mut R,
) -> Result<TrainReport> {
    check_data(buf, opt, model)?;
    model.fit_normalizers(buf)?;
    let (x, y) = normalized_arrays(model, buf)?;
    let n = buf.len();
    let members = model.members().len();
    let resamples = (0..members).map(|_| buf.bootstrap_indices(rng, n)).collect::<Result<Vec<_>>>()?;
    let mut report = TrainReport::default();
    for _ in 0..opt.cfg.epochs {
        let mut losses = Vec::with_capacity(members);
        for (b, idx) in resamples.iter().enumerate() {
            let net = &mut model.members_mut()[b];
            losses.push(run_pass(net, b, opt, &x, &y, idx, rng));
        }
        report.epoch_losses.push(losses);
    }
    Ok(report)
}
