//! Step-to-step Linear Inverted Pendulum model.
//!
//! The sagittal motion over one step of duration `T` with the stance foot at
//! `u_f` (relative to the CoM) is
//!
//! ```text
//! Δx_loc = v·sinh(ωT)/ω + (1 − cosh(ωT))·u_f
//! v'     = cosh(ωT)·v − ω·sinh(ωT)·u_f·cos θ
//! ```
//!
//! and the displacement is applied along the current heading. The `cos θ`
//! factor on the velocity update can be switched off through
//! [`LipParams::heading_coupling`].

use nalgebra::{Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub v_loc: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, v_loc: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            v_loc,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> crate::zono::Vec2 {
        crate::zono::Vec2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v_loc, self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Sagittal foot position relative to the CoM, meters.
    pub u_f: f64,
    /// Heading change, radians.
    pub u_dtheta: f64,
}

impl ControlInput {
    pub fn new(u_f: f64, u_dtheta: f64) -> Self {
        Self { u_f, u_dtheta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipParams {
    pub step_duration: f64,
    pub com_height: f64,
    pub gravity: f64,
    /// Multiply the foot term of the velocity update by `cos θ`.
    pub heading_coupling: bool,
}

impl Default for LipParams {
    fn default() -> Self {
        Self {
            step_duration: 0.4,
            com_height: 1.0,
            gravity: 9.81,
            heading_coupling: true,
        }
    }
}

impl LipParams {
    pub fn omega(&self) -> f64 {
        (self.gravity / self.com_height).sqrt()
    }

    /// `(cosh ωT, sinh ωT, ω)`
    fn hyperbolic(&self) -> (f64, f64, f64) {
        let w = self.omega();
        let wt = w * self.step_duration;
        (wt.cosh(), wt.sinh(), w)
    }

    pub fn validate(&self) -> bool {
        self.step_duration > 0.0 && self.com_height > 0.0 && self.gravity > 0.0
    }

    fn coupling(&self, theta: f64) -> f64 {
        if self.heading_coupling {
            theta.cos()
        } else {
            1.0
        }
    }

    /// Local sagittal displacement over one step.
    pub fn sagittal_displacement(&self, v_loc: f64, u_f: f64) -> f64 {
        let (c, s, w) = self.hyperbolic();
        v_loc * s / w + (1.0 - c) * u_f
    }
}

pub fn step(x: &RobotState, u: &ControlInput, p: &LipParams) -> RobotState {
    let (c, s, w) = p.hyperbolic();
    let dx = p.sagittal_displacement(x.v_loc, u.u_f);
    let (sin_t, cos_t) = x.theta.sin_cos();
    RobotState {
        x: x.x + dx * cos_t,
        y: x.y + dx * sin_t,
        v_loc: c * x.v_loc - w * s * u.u_f * p.coupling(x.theta),
        theta: wrap_angle(x.theta + u.u_dtheta),
    }
}

pub fn rollout(x0: &RobotState, controls: &[ControlInput], p: &LipParams) -> Vec<RobotState> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for u in controls {
        let next = step(states.last().unwrap(), u, p);
        states.push(next);
    }
    states
}

/// Jacobians of [`step`] in `(x, y, v_loc, θ)` / `(u_f, u_Δθ)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepJacobian {
    pub d_state: Matrix4<f64>,
    pub d_control: Matrix4x2<f64>,
}

pub fn step_gradient(x: &RobotState, u: &ControlInput, p: &LipParams) -> StepJacobian {
    let (c, s, w) = p.hyperbolic();
    let dx = p.sagittal_displacement(x.v_loc, u.u_f);
    let (sin_t, cos_t) = x.theta.sin_cos();
    let dv_dtheta = if p.heading_coupling {
        w * s * u.u_f * sin_t
    } else {
        0.0
    };
    #[rustfmt::skip]
    let d_state = Matrix4::new(
        1.0, 0.0, s / w * cos_t, -dx * sin_t,
        0.0, 1.0, s / w * sin_t, dx * cos_t,
        0.0, 0.0, c, dv_dtheta,
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let d_control = Matrix4x2::new(
        (1.0 - c) * cos_t, 0.0,
        (1.0 - c) * sin_t, 0.0,
        -w * s * p.coupling(x.theta), 0.0,
        0.0, 1.0,
    );
    StepJacobian { d_state, d_control }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn slack(&self, v: f64) -> Slack {
        Slack {
            lower: v - self.lo,
            upper: self.hi - v,
        }
    }
}

/// Signed distance to each side of a bound; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slack {
    pub lower: f64,
    pub upper: f64,
}

impl Slack {
    pub fn violation(&self) -> f64 {
        (-self.lower).max(-self.upper).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicBounds {
    pub u_f: Range,
    pub u_dtheta: Range,
    pub v_loc: Range,
}

impl Default for KinematicBounds {
    fn default() -> Self {
        let max_turn = 15f64.to_radians();
        Self {
            u_f: Range::new(-0.1, 0.4),
            u_dtheta: Range::new(-max_turn, max_turn),
            v_loc: Range::new(0.0, 1.0),
        }
    }
}

impl KinematicBounds {
    pub fn clamp(&self, u: &ControlInput) -> ControlInput {
        ControlInput {
            u_f: self.u_f.clamp(u.u_f),
            u_dtheta: self.u_dtheta.clamp(u.u_dtheta),
        }
    }

    pub fn validate(&self) -> bool {
        [self.u_f, self.u_dtheta, self.v_loc].iter().all(|r| r.lo <= r.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub ok: bool,
    pub u_f: Slack,
    pub u_dtheta: Slack,
    pub v_loc: Slack,
}

impl BoundsReport {
    pub fn max_violation(&self) -> f64 {
        self.u_f
            .violation()
            .max(self.u_dtheta.violation())
            .max(self.v_loc.violation())
    }
}

pub fn check_bounds(x: &RobotState, u: &ControlInput, kb: &KinematicBounds) -> BoundsReport {
    let u_f = kb.u_f.slack(u.u_f);
    let u_dtheta = kb.u_dtheta.slack(u.u_dtheta);
    let v_loc = kb.v_loc.slack(x.v_loc);
    let ok = [u_f, u_dtheta, v_loc].iter().all(|s| s.violation() == 0.0);
    BoundsReport {
        ok,
        u_f,
        u_dtheta,
        v_loc,
    }
}

/// Foot placement that brings the sagittal velocity to zero in one step,
/// clamped to the kinematic box, with no heading change.
pub fn brake_control(x: &RobotState, p: &LipParams, kb: &KinematicBounds) -> ControlInput {
    let (c, s, w) = p.hyperbolic();
    let k = w * s * p.coupling(x.theta);
    let u_f = if k.abs() > 1e-9 { c * x.v_loc / k } else { kb.u_f.hi };
    ControlInput {
        u_f: kb.u_f.clamp(u_f),
        u_dtheta: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_input_at_rest_stays() {
        let p = LipParams::default();
        let x = RobotState::new(1.0, 2.0, 0.0, 0.7);
        let n = step(&x, &ControlInput::default(), &p);
        assert_eq!(n, x);
    }

    #[test]
    fn heading_north_moves_only_y() {
        let p = LipParams::default();
        let x = RobotState::new(0.0, 0.0, 0.6, FRAC_PI_2);
        let n = step(&x, &ControlInput::new(0.1, 0.2), &p);
        assert!(n.x.abs() < 1e-15);
        assert!(n.y > 0.0);
    }

    #[test]
    fn reference_step_values() {
        let p = LipParams::default();
        let x = RobotState::new(0.0, 0.0, 0.5, 0.0);
        let n = step(&x, &ControlInput::new(0.2, 0.0), &p);
        // values from a tight-tolerance ODE integration of the pendulum
        assert!((n.x - 0.077_987_76).abs() < 1e-7, "{}", n.x);
        assert!((n.v_loc + 0.060_343_48).abs() < 1e-7, "{}", n.v_loc);
    }

    #[test]
    fn full_turn_keeps_heading() {
        let p = LipParams::default();
        let x = RobotState::new(0.0, 0.0, 0.3, 0.4);
        let n = step(&x, &ControlInput::new(0.0, TAU), &p);
        assert!((n.theta - 0.4).abs() < 1e-12);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn rollout_lengths() {
        let p = LipParams::default();
        let x0 = RobotState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(rollout(&x0, &[ControlInput::default()], &p).len(), 2);
        let states = rollout(&x0, &[ControlInput::default(); 5], &p);
        assert!(states.iter().all(|s| *s == x0));
    }

    #[test]
    fn exact_jacobian_entries() {
        let p = LipParams::default();
        let x = RobotState::new(0.3, -1.0, 0.4, 0.6);
        let j = step_gradient(&x, &ControlInput::new(0.1, 0.05), &p);
        assert_eq!(j.d_control[(3, 1)], 1.0);
        let w = p.omega();
        let expect = -w * (w * p.step_duration).sinh() * x.theta.cos();
        assert_eq!(j.d_control[(2, 0)], expect);
    }

    #[test]
    fn bounds_table_values() {
        let kb = KinematicBounds::default();
        let x = RobotState::new(0.0, 0.0, 0.5, 0.0);
        assert!(check_bounds(&x, &ControlInput::new(0.4, 0.0), &kb).ok);
        assert!(check_bounds(&x, &ControlInput::default(), &kb).ok);
        let r = check_bounds(&x, &ControlInput::new(0.0, 20f64.to_radians()), &kb);
        assert!(!r.ok);
        assert!((r.u_dtheta.violation().to_degrees() - 5.0).abs() < 1e-9);
        assert_eq!(r.u_f.violation(), 0.0);
    }

    #[test]
    fn brake_zeroes_velocity() {
        let p = LipParams::default();
        let kb = KinematicBounds::default();
        let x = RobotState::new(0.0, 0.0, 0.8, 0.3);
        let n = step(&x, &brake_control(&x, &p, &kb), &p);
        assert!(n.v_loc.abs() < 1e-12);
    }
}
