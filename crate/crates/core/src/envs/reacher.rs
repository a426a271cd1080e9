//! Planar two-link arm reaching for a goal. State
//! `(q1, q2, q1_dot, q2_dot, goal_x, goal_y)`; the goal never moves.
//!
//! Links are massless rods with point masses at their ends, moving in a
//! horizontal plane (no gravity) with viscous joint damping.

pub const LINK_LENGTHS: [f64; 2] = [0.1, 0.11];
pub const LINK_MASSES: [f64; 2] = [1.0, 1.0];
pub const REACHER_DAMPING: f64 = 0.02;
pub const REACHER_TORQUE_LIMIT: f64 = 0.2;

const CONTROL_COST: f64 = 0.01;

pub(super) fn nominal_start() -> Vec<f64> {
    vec![0.0, 0.0, 0.0, 0.0, 0.1, 0.1]
}

pub(crate) fn fingertip(q1: f64, q2: f64) -> (f64, f64) {
    let [l1, l2] = LINK_LENGTHS;
    (l1 * q1.cos() + l2 * (q1 + q2).cos(), l1 * q1.sin() + l2 * (q1 + q2).sin())
}

/// `-|fingertip - goal| - 0.01 |a|^2`.
pub(super) fn reward(s: &[f64], a: &[f64]) -> f64 {
    let (fx, fy) = fingertip(s[0], s[1]);
    let dist = ((fx - s[4]).powi(2) + (fy - s[5]).powi(2)).sqrt();
    let ctrl: f64 = a.iter().map(|u| u * u).sum();
    -dist - CONTROL_COST * ctrl
}

/// Manipulator equation `M(q) q_ddot + c(q, q_dot) = tau - b q_dot`.
pub(super) fn derivative(s: &[f64], tau: &[f64], out: &mut [f64]) {
    let [l1, l2] = LINK_LENGTHS;
    let [m1, m2] = LINK_MASSES;
    let (q2, dq1, dq2) = (s[1], s[2], s[3]);
    let (sin2, cos2) = q2.sin_cos();

    let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * cos2;
    let m12 = m2 * l2 * l2 + m2 * l1 * l2 * cos2;
    let m22 = m2 * l2 * l2;
    let h = m2 * l1 * l2 * sin2;
    let c1 = -h * dq2 * (2.0 * dq1 + dq2);
    let c2 = h * dq1 * dq1;

    let r1 = tau[0] - REACHER_DAMPING * dq1 - c1;
    let r2 = tau[1] - REACHER_DAMPING * dq2 - c2;
    let det = m11 * m22 - m12 * m12;
    out[0] = dq1;
    out[1] = dq2;
    out[2] = (m22 * r1 - m12 * r2) / det;
    out[3] = (m11 * r2 - m12 * r1) / det;
    out[4] = 0.0;
    out[5] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::super::EnvSpec;
    use super::*;

    #[test]
    fn on_goal_reward_is_zero() {
        let (fx, fy) = fingertip(0.4, -0.9);
        assert_eq!(reward(&[0.4, -0.9, 0.0, 0.0, fx, fy], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn nominal_goal_is_reachable() {
        let s = nominal_start();
        let r = (s[4] * s[4] + s[5] * s[5]).sqrt();
        let [l1, l2] = LINK_LENGTHS;
        assert!(r < l1 + l2 && r > (l2 - l1).abs());
    }

    #[test]
    fn unforced_motion_loses_kinetic_energy() {
        let spec = EnvSpec::reacher2();
        let kinetic = |s: &[f64]| {
            let [l1, l2] = LINK_LENGTHS;
            let [m1, m2] = LINK_MASSES;
            let cos2 = s[1].cos();
            let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * cos2;
            let m12 = m2 * l2 * l2 + m2 * l1 * l2 * cos2;
            let m22 = m2 * l2 * l2;
            0.5 * (m11 * s[2] * s[2] + 2.0 * m12 * s[2] * s[3] + m22 * s[3] * s[3])
        };
        let mut s = vec![0.0, 0.5, 2.0, -1.0, 0.1, 0.1];
        let mut e = kinetic(&s);
        for _ in 0..100 {
            s = spec.transition(&s, &[0.0, 0.0]);
            let e_next = kinetic(&s);
            assert!(e_next <= e + 1e-9);
            e = e_next;
        }
        assert_eq!((s[4], s[5]), (0.1f32 as f64, 0.1f32 as f64));
    }
}
