//! Cart-pole swing-up. State `(x, x_dot, theta, theta_dot)` with `theta = 0`
//! pointing up; the episode starts with the pole hanging down.

use std::f64::consts::PI;

use super::GRAVITY;

pub const CART_MASS: f64 = 0.5;
pub const POLE_MASS: f64 = 0.2;
/// Full pole length; also the length scale of the reward kernel.
pub const POLE_LENGTH: f64 = 0.6;
pub const CART_POLE_FORCE_LIMIT: f64 = 3.0;
/// Newtons per unit of action.
pub const CART_POLE_GEAR: f64 = 5.0;

/// Viscous friction on the cart, N per m/s.
pub const CART_FRICTION: f64 = 1.0;
/// Viscous damping of the pole joint, 1/s.
pub const POLE_DAMPING: f64 = 0.5;

const CONTROL_COST: f64 = 0.01;

pub(super) fn nominal_start() -> Vec<f64> {
    vec![0.0, 0.0, PI, 0.0]
}

pub(crate) fn tip(s: &[f64]) -> (f64, f64) {
    (s[0] + POLE_LENGTH * s[2].sin(), POLE_LENGTH * s[2].cos())
}

/// `exp(-|tip - goal|^2 / l^2) - 0.01 |a|^2` with the goal at the upright tip.
pub(super) fn reward(s: &[f64], a: &[f64]) -> f64 {
    let (tx, ty) = tip(s);
    let d2 = tx * tx + (ty - POLE_LENGTH) * (ty - POLE_LENGTH);
    let ctrl: f64 = a.iter().map(|u| u * u).sum();
    (-d2 / (POLE_LENGTH * POLE_LENGTH)).exp() - CONTROL_COST * ctrl
}

/// Frictionless cart with a uniform rod pivoting on it.
pub(super) fn derivative(s: &[f64], force: f64, out: &mut [f64]) {
    let (x_dot, theta, theta_dot) = (s[1], s[2], s[3]);
    let total = CART_MASS + POLE_MASS;
    let half = 0.5 * POLE_LENGTH;
    let (sin, cos) = theta.sin_cos();
    let force = CART_POLE_GEAR * force - CART_FRICTION * x_dot;
    let temp = (force + POLE_MASS * half * theta_dot * theta_dot * sin) / total;
    let theta_acc = (GRAVITY * sin - cos * temp) / (half * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
    let x_acc = temp - POLE_MASS * half * theta_acc * cos / total;
    out[0] = x_dot;
    out[1] = x_acc;
    out[2] = theta_dot;
    out[3] = theta_acc - POLE_DAMPING * theta_dot;
}
