//! Particle propagation where each particle stays bound to one ensemble
//! member for a whole rollout, and the uncertainty statistics that follow.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ensemble::DeltaModel;
use crate::error::{check_dim, Error, Result};

/// Rows of `states` grouped by their member index.
pub(crate) fn rows_by_member(assignment: &[usize], members: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); members];
    for (r, &b) in assignment.iter().enumerate() {
        groups[b].push(r);
    }
    groups
}

/// Mean delta and variance for every row, each row evaluated by the member
/// it is assigned to.
pub(crate) fn predict_assigned<M: DeltaModel + ?Sized>(
    model: &M,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    groups: &[Vec<usize>],
) -> (Array2<f64>, Array2<f64>) {
    let (n, d) = states.dim();
    let mut mean = Array2::zeros((n, d));
    let mut var = Array2::zeros((n, d));
    for (b, rows) in groups.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let s = states.select(Axis(0), rows);
        let a = actions.select(Axis(0), rows);
        let (m, v) = model.predict(b, s.view(), a.view());
        for (i, &r) in rows.iter().enumerate() {
            mean.row_mut(r).assign(&m.row(i));
            var.row_mut(r).assign(&v.row(i));
        }
    }
    (mean, var)
}

/// Add `mean + sqrt(var) * N(0, 1)` to each entry of `rows` (row-major
/// draw order).
pub(crate) fn sample_into<R: Rng + ?Sized>(
    states: &mut Array2<f64>,
    mean: &Array2<f64>,
    var: &Array2<f64>,
    rows: std::ops::Range<usize>,
    rng: &mut R,
) {
    let d = states.ncols();
    for r in rows {
        for c in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            states[[r, c]] += mean[[r, c]] + var[[r, c]].sqrt() * z;
        }
    }
}

/// `P` state particles, each bound to a fixed ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    states: Array2<f64>,
    assignment: Vec<usize>,
    members: usize,
}

impl ParticleSet {
    /// All particles start at `init`; particle `p` is bound to member `p % members`.
    pub fn new(init: &[f64], particles: usize, members: usize) -> Result<Self> {
        if members == 0 || particles == 0 || !particles.is_multiple_of(members) {
            return Err(Error::invalid(format!(
                "particle count {particles} must be a positive multiple of the member count {members}"
            )));
        }
        let mut states = Array2::zeros((particles, init.len()));
        for mut row in states.rows_mut() {
            row.assign(&ndarray::ArrayView1::from(init));
        }
        let assignment = (0..particles).map(|p| p % members).collect();
        Ok(Self { states, assignment, members })
    }

    /// Explicit states and assignment; every member must own the same
    /// number of particles.
    pub fn from_parts(states: Array2<f64>, assignment: Vec<usize>, members: usize) -> Result<Self> {
        check_dim(states.nrows(), assignment.len())?;
        if members == 0 || assignment.iter().any(|&b| b >= members) {
            return Err(Error::invalid("bootstrap assignment out of range"));
        }
        let groups = rows_by_member(&assignment, members);
        if groups.iter().any(|g| g.len() != groups[0].len()) || groups[0].is_empty() {
            return Err(Error::invalid("each member must own the same positive number of particles"));
        }
        Ok(Self { states, assignment, members })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sample `s' = s + mu + eps`, `eps ~ N(0, diag(var))`, for every
    /// particle under its own member and the shared action `a`.
    pub fn propagate<M: DeltaModel + ?Sized, R: Rng + ?Sized>(
        &mut self,
        a: &[f64],
        model: &M,
        rng: &mut R,
    ) -> Result<()> {
        check_dim(model.action_dim(), a.len())?;
        let actions = Array2::from_shape_fn((self.len(), a.len()), |(_, c)| a[c]);
        self.propagate_with(actions.view(), model, rng)
    }

    /// Like [`ParticleSet::propagate`] with one action row per particle.
    pub fn propagate_with<M: DeltaModel + ?Sized, R: Rng + ?Sized>(
        &mut self,
        actions: ArrayView2<f64>,
        model: &M,
        rng: &mut R,
    ) -> Result<()> {
        check_dim(model.state_dim(), self.dim())?;
        check_dim(self.len(), actions.nrows())?;
        if model.num_members() != self.members {
            return Err(Error::DimensionMismatch { expected: self.members, got: model.num_members() });
        }
        let groups = rows_by_member(&self.assignment, self.members);
        let (mean, var) = predict_assigned(model, self.states.view(), actions, &groups);
        let n = self.len();
        sample_into(&mut self.states, &mean, &var, 0..n, rng);
        Ok(())
    }
}

/// Split particle variance into `(aleatoric, epistemic)` per dimension:
/// the mean of within-member variances and the variance of member means.
/// Population (divide-by-count) variances throughout.
pub fn variance_decompose(ps: &ParticleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let groups = rows_by_member(&ps.assignment, ps.members);
    if ps.members < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::invalid("need at least two members with two particles each"));
    }
    let d = ps.dim();
    let nb = groups.len() as f64;
    let mut member_means = Array2::<f64>::zeros((groups.len(), d));
    let mut aleatoric = vec![0.0; d];
    for (b, rows) in groups.iter().enumerate() {
        let sub = ps.states.select(Axis(0), rows);
        let mean = sub.mean_axis(Axis(0)).expect("non-empty group");
        let var = sub.var_axis(Axis(0), 0.0);
        member_means.row_mut(b).assign(&mean);
        for (acc, v) in aleatoric.iter_mut().zip(var.iter()) {
            *acc += v / nb;
        }
    }
    let epistemic = member_means.var_axis(Axis(0), 0.0).to_vec();
    Ok((aleatoric, epistemic))
}

/// Mean and population standard deviation over all particles. The spread
/// pools both kinds of uncertainty.
pub fn aggregate_confidence(ps: &ParticleSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if ps.len() < 2 {
        return Err(Error::invalid("need at least two particles"));
    }
    Ok(mean_and_std(ps.states.view()))
}

pub(crate) fn mean_and_std(states: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = states.mean_axis(Axis(0)).expect("non-empty");
    let std = states.std_axis(Axis(0), 0.0);
    (mean.to_vec(), std.to_vec())
}
