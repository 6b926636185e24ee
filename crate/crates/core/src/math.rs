//! Small rotation and angle helpers shared across the crate.

use nalgebra::{Rotation3, Unit, UnitVector3, Vector3};

/// Minimal ("tilt") rotation taking the world z-axis onto `target`.
///
/// The rotation axis lies in the horizontal plane, so the result carries no
/// twist about the target axis. `target` need not be normalized.
pub fn tilt_rotation(target: &Vector3<f64>) -> Rotation3<f64> {
    let z = Vector3::z();
    match Rotation3::rotation_between(&z, target) {
        Some(r) => r,
        // Antiparallel: pick the x-axis as the flip axis.
        None => Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::x()), std::f64::consts::PI),
    }
}

/// Compose a tilt/yaw rotation: minimal rotation onto `z_axis`, then a twist
/// of `yaw` radians about the tilted axis.
pub fn tilt_twist_rotation(z_axis: &Vector3<f64>, yaw: f64) -> Rotation3<f64> {
    // R_tilt * Rz(yaw) equals Rot(z_axis, yaw) * R_tilt.
    tilt_rotation(z_axis) * Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// Decompose `r` into its tilted z-axis and the twist angle about that axis.
pub fn tilt_twist_decompose(r: &Rotation3<f64>) -> (UnitVector3<f64>, f64) {
    let z_axis = Unit::new_normalize(r * Vector3::z());
    let residual = tilt_rotation(&z_axis).inverse() * r;
    // residual is a pure z-rotation up to numerical noise.
    let twist = residual.matrix()[(1, 0)].atan2(residual.matrix()[(0, 0)]);
    (z_axis, twist)
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Shift `a` by multiples of 2*pi so it lies within pi of `reference`.
pub fn unwrap_near(a: f64, reference: f64) -> f64 {
    reference + wrap_angle(a - reference)
}

/// Intrinsic ZYX (roll, pitch, yaw) Euler angles of a rotation.
pub fn euler_zyx(r: &Rotation3<f64>) -> Vector3<f64> {
    let (roll, pitch, yaw) = r.euler_angles();
    Vector3::new(roll, pitch, yaw)
}
