//! State and action vectors plus the euclidean prediction-error metric.
//!
//! Everything the agent observes or executes is rounded to single
//! precision (`snap`). The checkpoint format stores 32-bit floats, so this
//! keeps persisted transitions and weights bit-exact on reload.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Round to the nearest `f32`-representable value.
#[inline]
pub fn snap(x: f64) -> f64 {
    x as f32 as f64
}

pub(crate) fn snap_all(xs: &mut [f64]) {
    for x in xs {
        *x = snap(*x);
    }
}

/// Environment state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state contains non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Caller guarantees finiteness (hot paths inside the planner).
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn snapped(mut self) -> Self {
        snap_all(&mut self.0);
        self
    }
}

impl Deref for StateVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVec {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Action executed in the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVec(Vec<f64>);

impl ActionVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("action contains non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ActionVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-dimension closed interval `[low, high]` for actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        check_dim(low.len(), high.len())?;
        if low.is_empty() {
            return Err(Error::invalid("action bounds need at least one dimension"));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid("action bounds must be finite with low <= high"));
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(limit: f64, dim: usize) -> Self {
        Self { low: vec![-limit; dim], high: vec![limit; dim] }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().zip(self.low.iter().zip(&self.high)).all(|(x, (l, h))| l <= x && x <= h)
    }

    /// Clamp into bounds and round to single precision. Returns the action
    /// and whether any coordinate had to be clamped.
    pub fn clamp(&self, a: &[f64]) -> Result<(ActionVec, bool)> {
        check_dim(self.dim(), a.len())?;
        let mut clamped = false;
        let values = a
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&x, (&l, &h))| {
                if x < l || x > h {
                    clamped = true;
                }
                // f32 rounding of an in-range value can step outside by one ulp
                snap(x.clamp(l, h)).clamp(l, h)
            })
            .collect();
        Ok((ActionVec::new(values)?, clamped))
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn range(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| h - l).collect()
    }
}

/// Euclidean distance between the observed and the predicted state.
pub fn euclidean_error(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_dim(actual.len(), predicted.len())?;
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in error computation"));
    }
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum::<f64>().sqrt())
}
