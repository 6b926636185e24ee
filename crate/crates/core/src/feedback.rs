//! Reactive feedback: CMP-based CoM control with rate limiting,
//! tilt-compensated swing-foot placement, and EOS-predictive step offsets.

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::gait::{lipm_propagate, LipmState};
use crate::math::{tilt_rotation, tilt_twist_decompose};

/// Gains and switches of the feedback layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackGains {
    /// Per-axis CoM position gain; stability needs k_com > omega.
    pub k_com: Vector2<f64>,
    /// Per-axis CoP/CMP gain; stability needs 0 < k_cop < omega.
    pub k_cop: Vector2<f64>,
    /// Per-axis CoM rate limits (m/s).
    pub rate_limit: Vector2<f64>,
    pub step_feedback_enabled: bool,
    pub tilt_feedback_enabled: bool,
    /// Tilt angle above which the swing transform engages (rad).
    pub tilt_threshold: f64,
    /// Cutoff of the tilt low-pass filter (Hz).
    pub tilt_cutoff: f64,
    /// Invalid-estimate command decay horizon (s).
    pub decay_time: f64,
}

impl Default for FeedbackGains {
    fn default() -> Self {
        Self {
            // omega = sqrt(9.81/0.8) ~ 3.50; k_com > omega, 0 < k_cop < omega.
            k_com: Vector2::new(5.0, 5.0),
            k_cop: Vector2::new(1.5, 1.5),
            rate_limit: Vector2::new(0.5, 0.5),
            step_feedback_enabled: true,
            tilt_feedback_enabled: true,
            tilt_threshold: 2.0_f64.to_radians(),
            tilt_cutoff: 10.0,
            decay_time: 0.5,
        }
    }
}

impl FeedbackGains {
    pub fn validate(&self) -> Result<(), String> {
        if self.rate_limit.x <= 0.0 || self.rate_limit.y <= 0.0 {
            return Err("rate limits must be positive".into());
        }
        for g in [self.k_com.x, self.k_com.y, self.k_cop.x, self.k_cop.y] {
            if !g.is_finite() {
                return Err("gains must be finite".into());
            }
        }
        Ok(())
    }
}

/// Which foot edge the robot pivots about while tilted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotEdge {
    Front,
    Back,
}

/// Filtered torso-attitude deviation from the reference, reduced to a tilt
/// about a horizontal axis.
#[derive(Debug, Clone, Copy)]
pub struct TiltState {
    /// Tilt rotation (deviation of the actual attitude from the reference,
    /// body-to-world sense).
    pub rotation: Rotation3<f64>,
    /// Tilt angle in [0, pi/2).
    pub angle: f64,
    /// True iff angle exceeds the threshold.
    pub tilted: bool,
    /// Foot edge implied by the sagittal tilt direction.
    pub pivot: PivotEdge,
}

impl TiltState {
    pub fn upright() -> Self {
        Self {
            rotation: Rotation3::identity(),
            angle: 0.0,
            tilted: false,
            pivot: PivotEdge::Front,
        }
    }
}

/// First-order low-pass on the tilt vector (axis * angle) rejecting impact
/// transients before the swing transform sees the tilt.
#[derive(Debug, Clone, Copy)]
pub struct TiltFilter {
    state: Vector3<f64>,
}

impl TiltFilter {
    pub fn new() -> Self {
        Self { state: Vector3::zeros() }
    }

    /// Feed the attitude deviation (actual relative to reference) for one
    /// control period and produce the filtered tilt state.
    pub fn update(
        &mut self,
        deviation: &Rotation3<f64>,
        dt: f64,
        gains: &FeedbackGains,
    ) -> TiltState {
        let (z_axis, _) = tilt_twist_decompose(deviation);
        let tilt = tilt_rotation(&z_axis);
        let raw = tilt.axis().map_or(Vector3::zeros(), |a| a.into_inner() * tilt.angle());
        let alpha = (2.0 * std::f64::consts::PI * gains.tilt_cutoff * dt).min(1.0);
        self.state += (raw - self.state) * alpha;

        let angle = self.state.norm();
        let rotation = if angle > 1e-12 {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(self.state), angle)
        } else {
            Rotation3::identity()
        };
        // Forward tilt rotates the up axis toward +x; its tilt axis has a
        // positive y component, so the robot pivots about the front edge.
        let pivot = if self.state.y >= 0.0 { PivotEdge::Front } else { PivotEdge::Back };
        TiltState { rotation, angle, tilted: angle > gains.tilt_threshold, pivot }
    }

    pub fn reset(&mut self) {
        self.state = Vector3::zeros();
    }
}

impl Default for TiltFilter {
    fn default() -> Self {
        Self::new()
    }
}

/// Centroidal Moment Pivot: the ground point whose pendulum dynamics
/// reproduce the estimated total CoM acceleration.
pub fn compute_cmp(com: Vector3<f64>, com_acc: Vector3<f64>, g_z: f64) -> Vector2<f64> {
    Vector2::new(
        com.x - com_acc.x * (com.z / g_z),
        com.y - com_acc.y * (com.z / g_z),
    )
}

/// CoM-ZMP controller: Choi-form velocity law with per-axis rate limiting
/// and invalid-estimate decay. Owns the integrated CoM command offset that
/// the control loop applies to tx.
#[derive(Debug, Clone, Copy)]
pub struct ComZmpController {
    last_command: Vector2<f64>,
    /// Command magnitude at the moment the estimate went invalid; sets the
    /// linear decay slope.
    decay_anchor: Vector2<f64>,
    offset: Vector2<f64>,
}

impl ComZmpController {
    pub fn new() -> Self {
        Self {
            last_command: Vector2::zeros(),
            decay_anchor: Vector2::zeros(),
            offset: Vector2::zeros(),
        }
    }

    /// Commanded CoM velocity for this tick.
    ///
    /// With a valid estimate: v = v_ref + k_com (m_ref - m_est) - k_cop
    /// (r_p,ref - cmp), clamped so the per-tick CoM change never exceeds
    /// limit * dt. With an invalid estimate the last command decays linearly
    /// to zero over the decay horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        com_ref: Vector2<f64>,
        com_vel_ref: Vector2<f64>,
        cop_ref: Vector2<f64>,
        com_est: Vector2<f64>,
        cmp: Vector2<f64>,
        valid: bool,
        gains: &FeedbackGains,
        dt: f64,
    ) -> Vector2<f64> {
        let command = if valid {
            let raw = com_vel_ref
                + (com_ref - com_est).component_mul(&gains.k_com)
                - (cop_ref - cmp).component_mul(&gains.k_cop);
            let cmd = Vector2::new(
                raw.x.clamp(-gains.rate_limit.x, gains.rate_limit.x),
                raw.y.clamp(-gains.rate_limit.y, gains.rate_limit.y),
            );
            self.decay_anchor = cmd;
            cmd
        } else {
            // Linear ramp to zero over the decay horizon, per axis.
            let step = self.decay_anchor.abs() * (dt / gains.decay_time);
            Vector2::new(
                shrink_toward_zero(self.last_command.x, step.x),
                shrink_toward_zero(self.last_command.y, step.y),
            )
        };
        self.last_command = command;
        // The accumulated offset is a correction, not a free state: leak it
        // toward zero and bound it so a persistent bias cannot wind up the
        // commanded CoM away from the reference.
        const OFFSET_LEAK_TAU: f64 = 0.5;
        const OFFSET_LIMIT: f64 = 0.05;
        self.offset += (command - com_vel_ref) * dt;
        self.offset *= 1.0 - (dt / OFFSET_LEAK_TAU).min(1.0);
        self.offset = Vector2::new(
            self.offset.x.clamp(-OFFSET_LIMIT, OFFSET_LIMIT),
            self.offset.y.clamp(-OFFSET_LIMIT, OFFSET_LIMIT),
        );
        command
    }

    /// Accumulated feedback CoM offset (command minus reference, integrated).
    pub fn offset(&self) -> Vector2<f64> {
        self.offset
    }

    pub fn reset(&mut self) {
        self.last_command = Vector2::zeros();
        self.decay_anchor = Vector2::zeros();
        self.offset = Vector2::zeros();
    }
}

fn shrink_toward_zero(v: f64, step: f64) -> f64 {
    if v.abs() <= step {
        0.0
    } else {
        v - v.signum() * step
    }
}

impl Default for ComZmpController {
    fn default() -> Self {
        Self::new()
    }
}

/// Re-express the nominal swing target in the tilted body frame so the foot
/// contacts the ground at the correct x-distance from the CoM.
///
/// The commanded offset from the CoM ground projection is the body-frame
/// view of the desired world offset: r' = m + R_tilt^{-1} (r_sw - m). Under
/// forward tilt the ground ahead rises in the body frame, so the forward
/// swing target is lifted, avoiding premature touchdown. Below the tilt
/// threshold the target passes through unchanged.
pub fn tilt_swing_transform(
    swing_target: Vector3<f64>,
    com_ground: Vector3<f64>,
    tilt: &TiltState,
) -> Vector3<f64> {
    if !tilt.tilted {
        return swing_target;
    }
    com_ground + tilt.rotation.inverse() * (swing_target - com_ground)
}

/// Predicted End-Of-Step CoM state: the LIPM closed form evaluated over the
/// remaining step time (1 - mu)/f_g. Shares `lipm_propagate` exactly.
pub fn eos_predict(state: &LipmState, mu: f64, gait_frequency: f64, omega: f64) -> LipmState {
    let t = (1.0 - mu) / gait_frequency;
    lipm_propagate(state, t, omega)
}

/// Step-offset feedback: blend of the instantaneous and predicted EOS CoM
/// errors, s_new = s + 2(1 - mu) e_c + 2 mu e_eos, clamped to the kinematic
/// stride bound about the support foot.
pub fn step_feedback(
    planned: Vector2<f64>,
    e_c: Vector2<f64>,
    e_eos: Vector2<f64>,
    mu: f64,
    support: Vector2<f64>,
    max_stride: f64,
) -> (Vector2<f64>, bool) {
    let target = planned + e_c * (2.0 * (1.0 - mu)) + e_eos * (2.0 * mu);
    let stride = target - support;
    if stride.norm() > max_stride {
        (support + stride * (max_stride / stride.norm()), true)
    } else {
        (target, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cmp_static_is_com_projection() {
        let cmp = compute_cmp(Vector3::new(0.1, -0.05, 0.8), Vector3::zeros(), 9.81);
        assert_relative_eq!(cmp, Vector2::new(0.1, -0.05));
    }

    #[test]
    fn cmp_inverts_pendulum_acceleration() {
        // Acceleration omega^2 * 0.05 at h = 0.8 puts the CMP 5 cm behind.
        let h = 0.8;
        let omega2 = 9.81 / h;
        let com = Vector3::new(0.2, 0.0, h);
        let acc = Vector3::new(omega2 * 0.05, 0.0, 0.0);
        let cmp = compute_cmp(com, acc, 9.81);
        assert_relative_eq!(cmp.x, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn cmp_equals_cop_in_pure_lipm() {
        let omega = (9.81f64 / 0.8).sqrt();
        let s = LipmState {
            position: Vector2::new(0.07, -0.02),
            velocity: Vector2::new(0.1, 0.0),
            cop: Vector2::new(0.02, 0.01),
        };
        let acc = s.acceleration(omega);
        let cmp = compute_cmp(
            Vector3::new(s.position.x, s.position.y, 0.8),
            Vector3::new(acc.x, acc.y, 0.0),
            9.81,
        );
        assert_relative_eq!(cmp, s.cop, epsilon = 1e-12);
    }

    #[test]
    fn control_zero_errors_passthrough() {
        let mut ctl = ComZmpController::new();
        let g = FeedbackGains::default();
        let v_ref = Vector2::new(0.2, 0.0);
        let cmd = ctl.update(
            Vector2::zeros(),
            v_ref,
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            true,
            &g,
            0.01,
        );
        assert_relative_eq!(cmd, v_ref);
    }

    #[test]
    fn control_position_error_gain() {
        let mut ctl = ComZmpController::new();
        let g = FeedbackGains::default();
        // CoM 2 cm behind the reference, CMP on reference.
        let cmd = ctl.update(
            Vector2::new(0.02, 0.0),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            true,
            &g,
            0.01,
        );
        assert_relative_eq!(cmd.x, g.k_com.x * 0.02, epsilon = 1e-12);
    }

    #[test]
    fn rate_limit_bit_exact() {
        let mut ctl = ComZmpController::new();
        let g = FeedbackGains::default();
        let dt = 0.01;
        let before = ctl.offset();
        let cmd = ctl.update(
            Vector2::new(10.0, -10.0),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            true,
            &g,
            dt,
        );
        assert_eq!(cmd.x, g.rate_limit.x);
        assert_eq!(cmd.y, -g.rate_limit.y);
        // The integrated offset leaks once per tick after accumulating.
        let leak = 1.0 - dt / 0.5;
        let delta = ctl.offset() - before;
        assert_eq!(delta.x, g.rate_limit.x * dt * leak);
        assert_eq!(delta.y, -g.rate_limit.y * dt * leak);
    }

    #[test]
    fn invalid_estimate_decays_to_zero() {
        let mut ctl = ComZmpController::new();
        let g = FeedbackGains::default();
        let dt = 0.01;
        ctl.update(
            Vector2::new(0.05, 0.0),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::zeros(),
            true,
            &g,
            dt,
        );
        let initial = ctl.last_command;
        assert!(initial.x > 0.0);
        let mut last = initial;
        for _ in 0..60 {
            let cmd = ctl.update(
                Vector2::zeros(),
                Vector2::zeros(),
                Vector2::zeros(),
                Vector2::zeros(),
                Vector2::zeros(),
                false,
                &g,
                dt,
            );
            assert!(cmd.x <= last.x + 1e-15);
            last = cmd;
        }
        // Linear decay over 0.5 s: gone after 50 ticks.
        assert_relative_eq!(last.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_lipm_error_decays() {
        // LIPM plant where the command velocity steers the CoM directly;
        // a 3 cm initial error must fall below 1 mm within 2 s.
        let g = FeedbackGains::default();
        let h = 0.8;
        let omega = (9.81f64 / h).sqrt();
        let dt = 0.01;
        let mut ctl = ComZmpController::new();
        let mut pos = Vector2::new(0.03, 0.0);
        let mut vel = Vector2::zeros();
        let mut below_since = None;
        for k in 0..400 {
            let t = k as f64 * dt;
            let acc = omega * omega * pos; // CoP at origin
            let cmp = compute_cmp(
                Vector3::new(pos.x, pos.y, h),
                Vector3::new(acc.x, acc.y, 0.0),
                9.81,
            );
            let cmd = ctl.update(
                Vector2::zeros(),
                Vector2::zeros(),
                Vector2::zeros(),
                pos,
                cmp,
                true,
                &g,
                dt,
            );
            vel = cmd;
            pos += vel * dt;
            if pos.norm() < 1e-3 && below_since.is_none() {
                below_since = Some(t);
            }
            if pos.norm() >= 1e-3 {
                below_since = None;
            }
        }
        assert!(below_since.is_some_and(|t| t <= 2.0), "settled at {below_since:?}");
    }

    #[test]
    fn tilt_transform_identity_below_threshold() {
        let tilt = TiltState::upright();
        let r = Vector3::new(0.2, 0.1, 0.0);
        assert_eq!(tilt_swing_transform(r, Vector3::new(0.05, 0.0, 0.0), &tilt), r);
    }

    #[test]
    fn tilt_transform_forward_tilt_lifts_forward_target() {
        // Forward tilt (up axis leaning toward +x): the ground ahead rises
        // in the body frame, so the forward swing target is commanded
        // higher and the pivot is the front edge.
        let g = FeedbackGains::default();
        let mut f = TiltFilter::new();
        let dev = Rotation3::from_axis_angle(&Vector3::y_axis(), 10.0_f64.to_radians());
        let mut tilt = TiltState::upright();
        for _ in 0..200 {
            tilt = f.update(&dev, 0.01, &g);
        }
        assert!(tilt.tilted);
        assert_eq!(tilt.pivot, PivotEdge::Front);
        let m = Vector3::new(0.0, 0.0, 0.0);
        let r = Vector3::new(0.2, 0.0, 0.0);
        let out = tilt_swing_transform(r, m, &tilt);
        assert!(out.z > 0.01, "forward target lifted, got {}", out.z);
    }

    #[test]
    fn tilt_transform_invertible() {
        let g = FeedbackGains::default();
        let mut f = TiltFilter::new();
        let dev = Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(0.3, 1.0, 0.0)),
            8.0_f64.to_radians(),
        );
        let mut tilt = TiltState::upright();
        for _ in 0..200 {
            tilt = f.update(&dev, 0.01, &g);
        }
        let m = Vector3::new(0.03, -0.02, 0.0);
        let r = Vector3::new(0.18, 0.08, 0.0);
        let out = tilt_swing_transform(r, m, &tilt);
        let mut inv = tilt;
        inv.rotation = tilt.rotation.inverse();
        let back = tilt_swing_transform(out, m, &inv);
        assert!((back - r).norm() <= 1e-12);
    }

    #[test]
    fn tilt_filter_threshold_and_pivot() {
        let g = FeedbackGains::default();
        let mut f = TiltFilter::new();
        // 1 degree stays below the 2 degree threshold.
        let small = Rotation3::from_axis_angle(&Vector3::y_axis(), 1.0_f64.to_radians());
        let mut tilt = TiltState::upright();
        for _ in 0..200 {
            tilt = f.update(&small, 0.01, &g);
        }
        assert!(!tilt.tilted);
        // Backward tilt selects the heel edge.
        let mut f = TiltFilter::new();
        let back = Rotation3::from_axis_angle(&Vector3::y_axis(), -10.0_f64.to_radians());
        for _ in 0..200 {
            tilt = f.update(&back, 0.01, &g);
        }
        assert_eq!(tilt.pivot, PivotEdge::Back);
    }

    #[test]
    fn tilt_filter_rejects_transients() {
        // A single-tick spike barely registers through the 10 Hz filter.
        let g = FeedbackGains::default();
        let mut f = TiltFilter::new();
        let spike = Rotation3::from_axis_angle(&Vector3::y_axis(), 20.0_f64.to_radians());
        let tilt = f.update(&spike, 0.001, &g);
        assert!(tilt.angle < 0.1 * 20.0_f64.to_radians());
    }

    #[test]
    fn eos_predict_zero_horizon() {
        let s = LipmState {
            position: Vector2::new(0.05, -0.01),
            velocity: Vector2::new(0.2, 0.1),
            cop: Vector2::zeros(),
        };
        let omega = (9.81f64 / 0.8).sqrt();
        let out = eos_predict(&s, 1.0, 2.0, omega);
        assert_eq!(out, s);
    }

    #[test]
    fn eos_predict_shares_lipm_propagation() {
        let s = LipmState {
            position: Vector2::new(0.05, -0.01),
            velocity: Vector2::new(0.2, 0.1),
            cop: Vector2::new(0.01, 0.0),
        };
        let omega = (9.81f64 / 0.8).sqrt();
        let mu = 0.3;
        let f_g = 2.0;
        let a = eos_predict(&s, mu, f_g, omega);
        let b = lipm_propagate(&s, (1.0 - mu) / f_g, omega);
        assert_eq!(a, b);
    }

    #[test]
    fn step_feedback_endpoints() {
        let s = Vector2::new(0.2, 0.1);
        let e_c = Vector2::new(0.01, 0.0);
        let e_eos = Vector2::new(0.03, 0.0);
        let sup = Vector2::zeros();
        let (at0, c0) = step_feedback(s, e_c, e_eos, 0.0, sup, 1.0);
        assert_relative_eq!(at0, s + e_c * 2.0, epsilon = 1e-15);
        assert!(!c0);
        let (at1, _) = step_feedback(s, e_c, e_eos, 1.0, sup, 1.0);
        assert_relative_eq!(at1, s + e_eos * 2.0, epsilon = 1e-15);
        let (mid, _) = step_feedback(s, e_c, e_eos, 0.5, sup, 1.0);
        assert_relative_eq!(mid, s + Vector2::new(0.04, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn step_feedback_zero_errors_unchanged() {
        let s = Vector2::new(0.2, 0.1);
        let (out, clamped) =
            step_feedback(s, Vector2::zeros(), Vector2::zeros(), 0.4, Vector2::zeros(), 1.0);
        assert_eq!(out, s);
        assert!(!clamped);
    }

    #[test]
    fn step_feedback_clamps_to_stride() {
        let s = Vector2::new(0.3, 0.0);
        let (out, clamped) = step_feedback(
            s,
            Vector2::new(0.2, 0.0),
            Vector2::new(0.2, 0.0),
            0.5,
            Vector2::zeros(),
            0.4,
        );
        assert!(clamped);
        assert_relative_eq!(out.norm(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn step_feedback_weight_shift_monotone() {
        // The weight moves monotonically from e_c to e_eos as mu grows.
        let s = Vector2::zeros();
        let e_c = Vector2::new(1.0, 0.0);
        let e_eos = Vector2::new(0.0, 1.0);
        let mut prev_x = f64::INFINITY;
        let mut prev_y = f64::NEG_INFINITY;
        for i in 0..=10 {
            let mu = i as f64 / 10.0;
            let (out, _) = step_feedback(s, e_c, e_eos, mu, Vector2::zeros(), 10.0);
            assert!(out.x <= prev_x + 1e-15);
            assert!(out.y >= prev_y - 1e-15);
            prev_x = out.x;
            prev_y = out.y;
        }
    }
}
