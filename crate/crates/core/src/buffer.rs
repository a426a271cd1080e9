use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{ActionVec, StateVec};

/// One observed environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: StateVec,
    pub a: ActionVec,
    pub s_next: StateVec,
    pub reward: f64,
}

impl Transition {
    pub fn new(s: StateVec, a: ActionVec, s_next: StateVec, reward: f64) -> Result<Self> {
        if s.dim() != s_next.dim() {
            return Err(Error::DimensionMismatch { expected: s.dim(), got: s_next.dim() });
        }
        Ok(Self { s, a, s_next, reward })
    }

    /// `s_next - s`, the regression target of the dynamics model.
    pub fn delta(&self) -> Vec<f64> {
        self.s_next.iter().zip(self.s.iter()).map(|(n, c)| n - c).collect()
    }
}

/// Insertion-ordered transition store. Unbounded unless a capacity is set,
/// in which case the oldest transitions are evicted first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    transitions: VecDeque<Transition>,
    capacity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self { transitions: VecDeque::with_capacity(capacity), capacity: Some(capacity) }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.transitions.get(i)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Transition> {
        self.transitions.iter()
    }

    /// Dimensions `(d_s, d_a)` of the stored transitions, if any.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.transitions.front().map(|t| (t.s.dim(), t.a.dim()))
    }

    pub fn push(&mut self, tr: Transition) {
        if let Some(cap) = self.capacity {
            if cap == 0 {
                return;
            }
            while self.transitions.len() >= cap {
                self.transitions.pop_front();
            }
        }
        self.transitions.push_back(tr);
    }

    /// Indices drawn uniformly with replacement.
    pub fn bootstrap_indices<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.len();
        Ok((0..count).map(|_| rng.random_range(0..n)).collect())
    }

    /// `count` transitions drawn uniformly with replacement.
    pub fn bootstrap_sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Transition>> {
        Ok(self.bootstrap_indices(rng, count)?.into_iter().map(|i| self.transitions[i].clone()).collect())
    }
}

impl Extend<Transition> for ReplayBuffer {
    fn extend<I: IntoIterator<Item = Transition>>(&mut self, iter: I) {
        for tr in iter {
            self.push(tr);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn tr(x: f64) -> Transition {
        Transition::new(
            StateVec::new(vec![x, 0.0]).unwrap(),
            ActionVec::new(vec![x]).unwrap(),
            StateVec::new(vec![x + 1.0, 0.5]).unwrap(),
            -x,
        )
        .unwrap()
    }

    #[test]
    fn push_grows_buffer() {
        let mut b = ReplayBuffer::new();
        b.push(tr(1.0));
        assert_eq!(b.len(), 1);
        assert_eq!(b.get(0), Some(&tr(1.0)));
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = ReplayBuffer::with_capacity(2);
        b.extend([tr(1.0), tr(2.0), tr(3.0)]);
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0), Some(&tr(2.0)));
        assert_eq!(b.get(1), Some(&tr(3.0)));
    }

    #[test]
    fn empty_bootstrap_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(ReplayBuffer::new().bootstrap_sample(&mut rng, 3), Err(Error::EmptyBuffer)));
    }

    #[test]
    fn single_item_repeats() {
        let mut b = ReplayBuffer::new();
        b.push(tr(4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = b.bootstrap_sample(&mut rng, 3).unwrap();
        assert_eq!(s, vec![tr(4.0); 3]);
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let mut b = ReplayBuffer::new();
        b.extend((0..50).map(|i| tr(i as f64)));
        let a = b.bootstrap_sample(&mut ChaCha8Rng::seed_from_u64(9), 20).unwrap();
        let c = b.bootstrap_sample(&mut ChaCha8Rng::seed_from_u64(9), 20).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn distinct_fraction_approaches_one_minus_inv_e() {
        // Independent simulation of the bootstrap: probability that an item
        // is never drawn in n draws is (1 - 1/n)^n, so the expected distinct
        // fraction is 1 - (1 - 1/n)^n.
        let n = 20_000;
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((expected - (1.0 - (-1.0f64).exp())).abs() < 1e-4);

        let mut b = ReplayBuffer::new();
        b.extend((0..n).map(|i| tr(i as f64)));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let idx = b.bootstrap_indices(&mut rng, n).unwrap();
        let distinct: HashSet<_> = idx.into_iter().collect();
        let frac = distinct.len() as f64 / n as f64;
        // std of the distinct fraction is about sqrt(e^-1 (1 - 2e^-1)) / sqrt(n) ~ 0.0023
        assert!((frac - expected).abs() < 0.01, "distinct fraction {frac}");
    }
}
