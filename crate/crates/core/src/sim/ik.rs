//! Analytic 3-DoF leg inverse kinematics for the pitch-roll-bend chain used
//! by the limb forward kinematics.

use nalgebra::{Rotation3, Vector3};
use thiserror::Error;

use crate::five_mass::LimbConfig;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("foot target at distance {0} outside the reachable range [{1}, {2}]")]
    OutOfReach(f64, f64, f64),
    #[error("degenerate target at the limb origin")]
    Degenerate,
}

/// Joint angles [pitch, roll, bend] placing the foot at `target` in the
/// torso frame, for the chain o + Ry(q0) Rx(q1) ([0,0,-c] + Ry(q2)[0,0,-a]).
///
/// The target is clamped to the reachable annulus when slightly outside
/// (contact kinematics produce such targets transiently); a hard error is
/// only raised beyond 5% overshoot.
pub fn leg_ik(target: Vector3<f64>, limb: &LimbConfig) -> Result<[f64; 3], IkError> {
    let a = limb.triangle.a;
    let c = limb.triangle.c;
    let p = target - limb.origin_offset;
    let d = p.norm();
    if d < 1e-9 {
        return Err(IkError::Degenerate);
    }
    let d_max = a + c;
    let d_min = (c - a).abs();
    if d > 1.05 * d_max || d < 0.95 * d_min {
        return Err(IkError::OutOfReach(d, d_min, d_max));
    }
    let d = d.clamp(d_min.max(1e-9), d_max);
    let p = p * (d / p.norm());

    // Bend from the law of cosines; the shank vector is
    // v = [-a sin q2, 0, -(c + a cos q2)], |v|^2 = a^2 + c^2 + 2 a c cos q2.
    let cos_bend = ((d * d - a * a - c * c) / (2.0 * a * c)).clamp(-1.0, 1.0);
    let q2 = cos_bend.acos();
    let v = Vector3::new(-a * q2.sin(), 0.0, -(c + a * cos_bend));

    // Roll: Ry does not move y, so p_y = -sin(q1) * v_z.
    let q1 = (p.y / -v.z).clamp(-1.0, 1.0).asin();
    let u = Rotation3::from_axis_angle(&Vector3::x_axis(), q1) * v;

    // Pitch closes the x-z plane.
    let q0 = (p.x * u.z - p.z * u.x).atan2(p.x * u.x + p.z * u.z);
    Ok([q0, q1, q2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::five_mass::{limb_end_torso, Side, TriangleParam};

    fn leg() -> LimbConfig {
        LimbConfig {
            origin_offset: Vector3::new(0.0, -0.08, -0.1),
            triangle: TriangleParam::uniform(0.4, 0.4),
            n_joints: 3,
            weight: 3.0,
            side: Side::Right,
        }
    }

    #[test]
    fn ik_fk_roundtrip() {
        let limb = leg();
        let mut failures = 0;
        for i in 0..500 {
            // Deterministic pseudo-grid over the joint space.
            let f = i as f64;
            let q = [
                0.8 * (f * 0.137).sin(),
                0.5 * (f * 0.211).sin(),
                0.1 + 1.2 * (0.5 + 0.5 * (f * 0.173).sin()),
            ];
            let target = limb_end_torso(&q, &limb).unwrap();
            let sol = leg_ik(target, &limb).unwrap();
            let back = limb_end_torso(&sol, &limb).unwrap();
            if (back - target).norm() > 1e-9 {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }

    #[test]
    fn ik_straight_down() {
        let limb = leg();
        let target = limb.origin_offset + Vector3::new(0.0, 0.0, -0.8);
        let q = leg_ik(target, &limb).unwrap();
        assert!(q[0].abs() < 1e-9);
        assert!(q[1].abs() < 1e-9);
        assert!(q[2].abs() < 1e-6);
    }

    #[test]
    fn ik_rejects_unreachable() {
        let limb = leg();
        let target = limb.origin_offset + Vector3::new(0.0, 0.0, -2.0);
        assert!(leg_ik(target, &limb).is_err());
    }

    #[test]
    fn ik_clamps_slight_overshoot() {
        let limb = leg();
        let target = limb.origin_offset + Vector3::new(0.0, 0.0, -0.81);
        let q = leg_ik(target, &limb).unwrap();
        let back = limb_end_torso(&q, &limb).unwrap();
        // Lands on the boundary of the workspace.
        assert!(((back - limb.origin_offset).norm() - 0.8).abs() < 1e-9);
    }
}
