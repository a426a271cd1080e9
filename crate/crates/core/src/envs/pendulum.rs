//! Torque-limited pendulum. The observation is `(cos theta, sin theta,
//! theta_dot)` with `theta = 0` upright; the angle is recovered with
//! `atan2` before integrating.

use std::f64::consts::PI;

use super::{rk4, GRAVITY};

pub const PENDULUM_MASS: f64 = 1.0;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const PENDULUM_TORQUE_LIMIT: f64 = 2.0;

pub(super) fn nominal_start() -> Vec<f64> {
    observe(PI, 0.0)
}

pub(super) fn perturbed_start(noise: &mut impl FnMut() -> f64) -> Vec<f64> {
    let theta = PI + noise();
    let omega = noise();
    observe(theta, omega)
}

fn observe(theta: f64, omega: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin(), omega]
}

pub(crate) fn angle(s: &[f64]) -> f64 {
    s[1].atan2(s[0])
}

/// `-(theta^2 + 0.1 theta_dot^2 + 0.001 u^2)` with theta wrapped to `[-pi, pi]`.
pub(super) fn reward(s: &[f64], a: &[f64]) -> f64 {
    let theta = angle(s);
    let omega = s[2];
    let u = a[0];
    -(theta * theta + 0.1 * omega * omega + 0.001 * u * u)
}

fn derivative(x: &[f64], torque: f64, out: &mut [f64]) {
    let l = PENDULUM_LENGTH;
    out[0] = x[1];
    out[1] = 3.0 * GRAVITY / (2.0 * l) * x[0].sin() + 3.0 / (PENDULUM_MASS * l * l) * torque;
}

pub(super) fn step(s: &[f64], torque: f64, dt: f64) -> Vec<f64> {
    let next = rk4(&[angle(s), s[2]], dt, |x, out| derivative(x, torque, out));
    observe(next[0], next[1])
}

/// Mechanical energy per unit inertia of the unforced pendulum.
#[cfg(test)]
fn energy(theta: f64, omega: f64) -> f64 {
    0.5 * omega * omega + 3.0 * GRAVITY / (2.0 * PENDULUM_LENGTH) * theta.cos()
}

#[cfg(test)]
mod tests {
    use super::super::{EnvInstance, EnvSpec};
    use super::*;

    #[test]
    fn upright_reward_is_zero() {
        assert_eq!(reward(&[1.0, 0.0, 0.0], &[0.0]), 0.0);
    }

    #[test]
    fn wrapped_angle_in_reward() {
        // hanging down: theta = pi
        let r = reward(&nominal_start(), &[0.0]);
        assert!((r + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn upright_equilibrium_holds_for_one_step() {
        let spec = EnvSpec::pendulum();
        let next = spec.transition(&[1.0, 0.0, 0.0], &[0.0]);
        assert!((next[0] - 1.0).abs() < 1e-6);
        assert!(next[1].abs() < 1e-6);
        assert!(next[2].abs() < 1e-6);
    }

    #[test]
    fn energy_drift_below_one_percent() {
        let mut spec = EnvSpec::pendulum();
        spec.task_horizon = 1000;
        let mut env = EnvInstance::new(spec).unwrap();
        env.reset(0);
        // large swing: released at 1 rad from hanging down
        let start = observe(PI - 1.0, 0.0);
        let e0 = energy(PI - 1.0, 0.0);
        let mut s = start;
        for _ in 0..1000 {
            s = env.spec().transition(&s, &[0.0]);
        }
        let e1 = energy(angle(&s), s[2]);
        assert!(((e1 - e0) / e0).abs() < 0.01, "e0 {e0} e1 {e1}");
    }
}
