//! Feed-forward network with a diagonal Gaussian output head.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_dim, Error, Result};
use crate::types::snap;

/// Soft bounds applied to the emitted log-variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogVarBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for LogVarBounds {
    fn default() -> Self {
        Self { min: -10.0, max: 0.5 }
    }
}

impl LogVarBounds {
    /// `max - softplus(max - x)` followed by `min + softplus(x - min)`.
    /// Returns the bounded value and its derivative with respect to `x`.
    /// The second softplus can overshoot `max` by `ln(1 + e^(min - max))`,
    /// so the result is finally clipped, with zero slope where that bites.
    #[inline]
    pub fn apply(&self, raw: f64) -> (f64, f64) {
        let upper = self.max - softplus(self.max - raw);
        let d_upper = sigmoid(self.max - raw);
        let out = self.min + softplus(upper - self.min);
        let d_out = sigmoid(upper - self.min);
        if out > self.max {
            return (self.max, 0.0);
        }
        (out, d_out * d_upper)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn swish_grad(z: f64) -> f64 {
    let sg = sigmoid(z);
    sg + z * sg * (1.0 - sg)
}

/// Weights `w` are `fan_in x fan_out` so a batch `X` maps to `X w + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || snap(dist.sample(rng)));
        Self { w, b: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Raw network outputs for a batch, in the network's (normalized) units.
#[derive(Debug, Clone)]
pub struct GaussianOutput {
    pub mean: Array2<f64>,
    pub logvar: Array2<f64>,
}

impl GaussianOutput {
    pub fn variance(&self) -> Array2<f64> {
        self.logvar.mapv(f64::exp)
    }
}

/// MLP with swish hidden layers whose last layer emits a mean and a
/// bounded log-variance per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNet {
    layers: Vec<Dense>,
    bounds: LogVarBounds,
}

impl GaussianNet {
    /// `sizes` is `[input, hidden..., 2 * output]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], bounds: LogVarBounds, rng: &mut R) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Ok(Self { layers, bounds })
    }

    pub fn zeros(sizes: &[usize], bounds: LogVarBounds) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, bounds })
    }

    pub fn from_layers(layers: Vec<Dense>, bounds: LogVarBounds) -> Result<Self> {
        let mut sizes = vec![layers.first().ok_or_else(|| Error::invalid("no layers"))?.fan_in()];
        for l in &layers {
            check_dim(*sizes.last().unwrap(), l.fan_in())?;
            check_dim(l.fan_out(), l.b.len())?;
            sizes.push(l.fan_out());
        }
        Self::validate_sizes(&sizes)?;
        Ok(Self { layers, bounds })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("network needs at least one layer of non-zero width"));
        }
        if !sizes[sizes.len() - 1].is_multiple_of(2) {
            return Err(Error::invalid("output layer must hold a mean and a log-variance per dimension"));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].fan_in()];
        v.extend(self.layers.iter().map(Dense::fan_out));
        v
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out() / 2
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn bounds(&self) -> LogVarBounds {
        self.bounds
    }

    pub fn set_bounds(&mut self, bounds: LogVarBounds) {
        self.bounds = bounds;
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Pre-bound output of the last layer (`[mean | raw log-variance]`).
    pub fn forward_raw(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            if i < last {
                z.mapv_inplace(swish);
            }
            h = z;
        }
        h
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> GaussianOutput {
        let d = self.output_dim();
        let raw = self.forward_raw(x);
        let mean = raw.slice(s![.., ..d]).to_owned();
        let logvar = raw.slice(s![.., d..]).mapv(|r| self.bounds.apply(r).0);
        GaussianOutput { mean, logvar }
    }

    /// Single-input forward pass on `[s, a]`. Returns `(mean delta, variance)`.
    pub fn forward_one(&self, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.input_dim(), s.len() + a.len())?;
        if s.iter().chain(a).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network input"));
        }
        let x = Array2::from_shape_vec((1, s.len() + a.len()), s.iter().chain(a).copied().collect())
            .expect("shape matches length");
        let out = self.forward(x.view());
        Ok((out.mean.row(0).to_vec(), out.variance().row(0).to_vec()))
    }

    /// Mean Gaussian NLL over the batch and its gradient for every layer.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Vec<Dense>) {
        let n = x.nrows();
        let d = self.output_dim();
        assert_eq!(target.dim(), (n, d), "target shape");
        let last = self.layers.len() - 1;

        // forward, caching pre-activations and layer inputs
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            inputs.push(h);
            h = if i < last { z.mapv(swish) } else { z.clone() };
            pre.push(z);
        }
        let raw = h;

        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros((n, 2 * d));
        for r in 0..n {
            for j in 0..d {
                let mu = raw[[r, j]];
                let (lv, dlv) = self.bounds.apply(raw[[r, d + j]]);
                let inv_var = (-lv).exp();
                let resid = target[[r, j]] - mu;
                loss += 0.5 * (lv + resid * resid * inv_var);
                delta[[r, j]] = -resid * inv_var * inv_n;
                delta[[r, d + j]] = 0.5 * (1.0 - resid * resid * inv_var) * dlv * inv_n;
            }
        }
        loss *= inv_n;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if i < last {
                Zip::from(&mut delta).and(&pre[i]).for_each(|g, &z| *g *= swish_grad(z));
            }
            let gw = inputs[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].w.t());
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads)
    }
}

/// `sum_d 0.5 * (log var_d + (target_d - mean_d)^2 / var_d)`, constant omitted.
pub fn nll_loss(mean: &[f64], var: &[f64], target: &[f64]) -> Result<f64> {
    check_dim(mean.len(), var.len())?;
    check_dim(mean.len(), target.len())?;
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("variance must be positive"));
    }
    Ok(mean.iter().zip(var).zip(target).map(|((m, v), t)| 0.5 * (v.ln() + (t - m) * (t - m) / v)).sum())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_network_emits_zero_mean_unit_raw_variance() {
        let net = GaussianNet::zeros(&[5, 8, 8, 4], LogVarBounds::default()).unwrap();
        let x = Array2::from_elem((3, 5), 0.7);
        let raw = net.forward_raw(x.view());
        assert!(raw.iter().all(|&v| v == 0.0));
        // before bounding, exp(0) = 1; after, the soft bound maps 0 to apply(0)
        let out = net.forward(x.view());
        assert!(out.mean.iter().all(|&m| m == 0.0));
        let expected = LogVarBounds::default().apply(0.0).0;
        assert!(out.logvar.iter().all(|&lv| lv == expected));
    }

    #[test]
    fn bounded_log_variance_stays_in_range() {
        let b = LogVarBounds::default();
        for raw in [-1e6, -50.0, -10.0, -1.0, 0.0, 0.5, 3.0, 1e6] {
            let (lv, _) = b.apply(raw);
            assert!(lv >= b.min && lv <= b.max, "{raw} -> {lv}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = GaussianNet::new(&[3, 16, 16, 4], b, &mut rng).unwrap();
        let x = random_batch(&mut rng, 50, 3) * 100.0;
        let var = net.forward(x.view()).variance();
        assert!(var.iter().all(|&v| v >= b.min.exp() && v <= b.max.exp()));
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Second implementation: scalar loops over the same weights.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = GaussianNet::new(&[4, 7, 6, 6], LogVarBounds::default(), &mut rng).unwrap();
        let x = random_batch(&mut rng, 5, 4);
        let out = net.forward(x.view());
        for r in 0..5 {
            let mut h: Vec<f64> = x.row(r).to_vec();
            for (li, layer) in net.layers().iter().enumerate() {
                let mut z = vec![0.0; layer.fan_out()];
                for (j, zj) in z.iter_mut().enumerate() {
                    let mut acc = layer.b[j];
                    for (k, hk) in h.iter().enumerate() {
                        acc += hk * layer.w[[k, j]];
                    }
                    *zj = acc;
                }
                if li + 1 < net.layers().len() {
                    for zj in z.iter_mut() {
                        *zj = *zj / (1.0 + (-*zj).exp());
                    }
                }
                h = z;
            }
            for j in 0..3 {
                assert!((out.mean[[r, j]] - h[j]).abs() < 1e-12);
                let raw = h[3 + j];
                let upper = 0.5 - (1.0 + (0.5 - raw).exp()).ln();
                let lv = -10.0 + (1.0 + (upper + 10.0).exp()).ln();
                assert!((out.logvar[[r, j]] - lv).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll_loss(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 2.0]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let v = nll_loss(&[0.0; 3], &[e; 3], &[0.0; 3]).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        // hand-evaluated: 0.5 (ln 2 + 1/2) + 0.5 (ln 0.5 + 0.25/0.5)
        let v = nll_loss(&[0.0, 1.0], &[2.0, 0.5], &[1.0, 1.5]).unwrap();
        let hand = 0.5 * (2f64.ln() + 0.5) + 0.5 * (0.5f64.ln() + 0.5);
        assert!((v - hand).abs() < 1e-15);
        assert!(nll_loss(&[0.0], &[0.0], &[0.0]).is_err());
        assert!(nll_loss(&[0.0], &[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn batch_loss_agrees_with_nll_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = GaussianNet::new(&[3, 5, 4], LogVarBounds::default(), &mut rng).unwrap();
        let x = random_batch(&mut rng, 6, 3);
        let t = random_batch(&mut rng, 6, 2);
        let (loss, _) = net.loss_and_grad(x.view(), t.view());
        let out = net.forward(x.view());
        let var = out.variance();
        let mut acc = 0.0;
        for r in 0..6 {
            acc += nll_loss(&out.mean.row(r).to_vec(), &var.row(r).to_vec(), &t.row(r).to_vec()).unwrap();
        }
        assert!((loss - acc / 6.0).abs() < 1e-12);
    }

    #[test]
    fn forward_one_rejects_bad_input() {
        let net = GaussianNet::zeros(&[3, 4, 4], LogVarBounds::default()).unwrap();
        assert!(net.forward_one(&[0.0, f64::NAN], &[0.0]).is_err());
        assert!(net.forward_one(&[0.0], &[0.0]).is_err());
    }
}
