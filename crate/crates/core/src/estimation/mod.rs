//! Centroidal state estimation: fuses IMU, encoder kinematics, and limb
//! dynamics into linear and angular state estimates via two Kalman filters.

mod kalman;
mod pipeline;

pub use kalman::{AxisKf, KalmanError, TripletKf, TripletNoise};
pub use pipeline::{CentroidalEstimator, EstimateFrame, EstimatorVariant};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::five_mass::{JointState, Side};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Model(#[from] crate::five_mass::ModelError),
}

/// Gyro magnitude above which the sample is flagged as saturated.
pub const GYRO_SANITY_BOUND: f64 = 35.0;

/// One synchronized sensor reading.
///
/// The torso orientation comes from an upstream attitude estimator and is
/// treated as a direct input.
#[derive(Debug, Clone)]
pub struct SensorSample {
    pub timestamp: f64,
    /// Accelerometer reading in the sensor (torso) frame, specific force.
    pub accel: Vector3<f64>,
    /// Gyro rates in the torso frame.
    pub gyro: Vector3<f64>,
    pub joints: JointState,
    pub torso_orientation: Rotation3<f64>,
}

impl SensorSample {
    pub fn gyro_saturated(&self) -> bool {
        self.gyro.norm() > GYRO_SANITY_BOUND
    }
}

/// Noise and threshold configuration of the estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub linear_noise: TripletNoise,
    pub angular_noise: TripletNoise,
    /// Inflation applied to the acceleration measurement variance, covering
    /// the extra noise from numerical differentiation.
    pub diff_covariance_inflation: f64,
    /// Foot height difference required to switch the support side (m).
    pub support_exchange_threshold: f64,
    pub initial_variance: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            linear_noise: TripletNoise {
                process_jerk: 2000.0,
                meas_value: 1e-6,
                meas_acceleration: 0.05,
            },
            angular_noise: TripletNoise {
                process_jerk: 2000.0,
                meas_value: 1e-6,
                meas_acceleration: 0.05,
            },
            diff_covariance_inflation: 4.0,
            support_exchange_threshold: 0.01,
            initial_variance: 1.0,
        }
    }
}

/// Pick the support side as the lower foot, with hysteresis: the side only
/// switches when the height difference exceeds `threshold`.
pub fn support_foot_select(
    left_height: f64,
    right_height: f64,
    previous: Side,
    threshold: f64,
) -> Side {
    let diff = left_height - right_height;
    if diff.abs() <= threshold {
        return previous;
    }
    if diff < 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Backward-difference angular acceleration from two gyro samples.
pub fn gyro_rate_to_acc(
    previous: Vector3<f64>,
    current: Vector3<f64>,
    dt: f64,
) -> Result<Vector3<f64>, EstimationError> {
    if dt <= 0.0 {
        return Err(EstimationError::NonPositiveDt(dt));
    }
    Ok((current - previous) / dt)
}

/// Torso mass acceleration from the IMU reading.
///
/// Removes the tangential component induced by the sensor mounting offset,
/// then rotates to world and removes gravity. Returns (torso-frame, world).
pub fn imu_to_torso_com_acc(
    accel: Vector3<f64>,
    torso_angular_acc: Vector3<f64>,
    torso_orientation: &Rotation3<f64>,
    sensor_mount: Vector3<f64>,
    torso_com_offset: Vector3<f64>,
    gravity: Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let lever = sensor_mount - torso_com_offset;
    let torso_frame = accel - torso_angular_acc.cross(&lever);
    let world = torso_orientation * torso_frame + gravity;
    (torso_frame, world)
}

/// Global limb mass acceleration: origin transport plus origin-relative term.
pub fn limb_global_acc(
    torso_mass_acc_world: Vector3<f64>,
    torso_angular_acc: Vector3<f64>,
    origin_offset: Vector3<f64>,
    torso_com_offset: Vector3<f64>,
    limb_relative_acc: Vector3<f64>,
    torso_orientation: &Rotation3<f64>,
) -> Vector3<f64> {
    torso_mass_acc_world
        + torso_orientation * torso_angular_acc.cross(&(origin_offset - torso_com_offset))
        + torso_orientation * limb_relative_acc
}

/// Weight-weighted mean of the five mass accelerations.
pub fn centroidal_linear_acc(
    accelerations: &[Vector3<f64>],
    weights: &[f64],
) -> Result<Vector3<f64>, EstimationError> {
    Ok(crate::five_mass::aggregate_com(accelerations, weights)?)
}

/// Normalized centroidal angular acceleration from the five masses.
///
/// Masses closer than 1e-6 m to the CoM carry no angular information; their
/// weight is dropped from the normalization.
pub fn centroidal_angular_acc(
    masses: &[Vector3<f64>],
    accelerations: &[Vector3<f64>],
    com: Vector3<f64>,
    com_acc: Vector3<f64>,
    weights: &[f64],
) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    let mut total = 0.0;
    for ((m, a), &w) in masses.iter().zip(accelerations).zip(weights) {
        let d = m - com;
        let d2 = d.norm_squared();
        if d2 <= 1e-12 {
            continue;
        }
        acc += w * d.cross(&(a - com_acc)) / d2;
        total += w;
    }
    if total > 0.0 {
        acc / total
    } else {
        Vector3::zeros()
    }
}

/// Estimated centroidal state, the primary estimator output.
#[derive(Debug, Clone, Copy)]
pub struct CentroidalState {
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    pub com_acceleration: Vector3<f64>,
    /// Inertia-orientation Euler angles (roll, pitch, yaw).
    pub inertia_angles: Vector3<f64>,
    pub inertia_rates: Vector3<f64>,
    pub inertia_accelerations: Vector3<f64>,
    pub valid: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn support_select_clear_winner() {
        assert_eq!(support_foot_select(-0.02, 0.0, Side::Right, 0.01), Side::Left);
    }

    #[test]
    fn support_select_hysteresis_keeps_previous() {
        assert_eq!(support_foot_select(-0.003, 0.0, Side::Right, 0.01), Side::Right);
    }

    #[test]
    fn support_select_tie_keeps_previous() {
        assert_eq!(support_foot_select(0.1, 0.1, Side::Left, 0.01), Side::Left);
    }

    #[test]
    fn gyro_diff_constant_is_zero() {
        let g = Vector3::new(0.1, -0.2, 0.3);
        assert_relative_eq!(gyro_rate_to_acc(g, g, 0.01).unwrap().norm(), 0.0);
    }

    #[test]
    fn gyro_diff_ramp() {
        let acc = gyro_rate_to_acc(Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), 0.01).unwrap();
        assert_relative_eq!(acc.x, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn gyro_diff_rejects_bad_dt() {
        assert!(gyro_rate_to_acc(Vector3::zeros(), Vector3::zeros(), -0.01).is_err());
    }

    #[test]
    fn gyro_diff_tracks_sinusoid() {
        // Analytic derivative oracle: theta_dot = sin(2*pi*t) at 100 Hz.
        let dt = 0.01;
        let omega = std::f64::consts::TAU;
        let mut max_err: f64 = 0.0;
        for k in 1..200 {
            let t0 = (k - 1) as f64 * dt;
            let t1 = k as f64 * dt;
            let prev = Vector3::new((omega * t0).sin(), 0.0, 0.0);
            let cur = Vector3::new((omega * t1).sin(), 0.0, 0.0);
            let est = gyro_rate_to_acc(prev, cur, dt).unwrap().x;
            // Backward difference approximates the derivative at the midpoint;
            // compare against the analytic derivative there.
            let truth = omega * (omega * (t1 - 0.5 * dt)).cos();
            max_err = max_err.max((est - truth).abs());
        }
        assert!(max_err <= 0.04, "max error {max_err}");
    }

    #[test]
    fn imu_at_rest_gives_zero() {
        let gravity = Vector3::new(0.0, 0.0, -9.81);
        // At rest the accelerometer reads the reaction to gravity.
        let accel = -gravity;
        let (_, world) = imu_to_torso_com_acc(
            accel,
            Vector3::zeros(),
            &Rotation3::identity(),
            Vector3::new(0.0, 0.0, 0.1),
            Vector3::zeros(),
            gravity,
        );
        assert_relative_eq!(world.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn imu_removes_tangential_term() {
        // Forward-model the sensor reading from a pure angular acceleration.
        let gravity = Vector3::new(0.0, 0.0, -9.81);
        let theta_ddot = Vector3::new(0.0, 0.0, 10.0);
        let lever = Vector3::new(0.1, 0.0, 0.0);
        let accel = theta_ddot.cross(&lever) - gravity;
        let (_, world) = imu_to_torso_com_acc(
            accel,
            theta_ddot,
            &Rotation3::identity(),
            lever,
            Vector3::zeros(),
            gravity,
        );
        assert_relative_eq!(world.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn imu_pure_linear_push() {
        let gravity = Vector3::new(0.0, 0.0, -9.81);
        let accel = Vector3::new(1.0, 0.0, 0.0) - gravity;
        let (_, world) = imu_to_torso_com_acc(
            accel,
            Vector3::zeros(),
            &Rotation3::identity(),
            Vector3::zeros(),
            Vector3::zeros(),
            gravity,
        );
        assert_relative_eq!(world, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn limb_acc_rigid_translation() {
        let mt = Vector3::new(0.5, 0.0, 0.0);
        let acc = limb_global_acc(
            mt,
            Vector3::zeros(),
            Vector3::new(0.0, 0.1, -0.1),
            Vector3::zeros(),
            Vector3::zeros(),
            &Rotation3::identity(),
        );
        assert_relative_eq!(acc, mt, epsilon = 1e-15);
    }

    #[test]
    fn limb_acc_rotational_transport() {
        let acc = limb_global_acc(
            Vector3::zeros(),
            Vector3::new(0.0, 10.0, 0.0),
            Vector3::new(0.0, 0.0, -0.2),
            Vector3::zeros(),
            Vector3::zeros(),
            &Rotation3::identity(),
        );
        assert_relative_eq!(acc, Vector3::new(-2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn limb_acc_relative_passthrough() {
        let acc = limb_global_acc(
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::new(0.0, 0.2, 0.2),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            &Rotation3::identity(),
        );
        assert_relative_eq!(acc, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn angular_acc_zero_when_accelerations_match() {
        let masses = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let a = Vector3::new(0.3, 0.0, 0.1);
        let out = centroidal_angular_acc(&masses, &[a, a], Vector3::zeros(), a, &[1.0, 1.0]);
        assert_relative_eq!(out.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn angular_acc_unit_cross() {
        let out = centroidal_angular_acc(
            &[Vector3::new(1.0, 0.0, 0.0)],
            &[Vector3::new(0.0, 1.0, 0.0)],
            Vector3::zeros(),
            Vector3::zeros(),
            &[2.0],
        );
        assert_relative_eq!(out, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn angular_acc_mirrored_pair_cancels_lateral() {
        // Counter-rotating symmetric arm pair: y/z lateral components cancel.
        let masses = [Vector3::new(0.1, 0.2, 0.5), Vector3::new(0.1, -0.2, 0.5)];
        let accs = [Vector3::new(0.0, 0.3, 0.4), Vector3::new(0.0, 0.3, -0.4)];
        let out = centroidal_angular_acc(
            &masses,
            &accs,
            Vector3::zeros(),
            Vector3::zeros(),
            &[2.0, 2.0],
        );
        // Direct summation oracle.
        let mut expect = Vector3::zeros();
        for (m, a) in masses.iter().zip(&accs) {
            expect += 2.0 * m.cross(a) / m.norm_squared();
        }
        expect /= 4.0;
        assert_relative_eq!(out, expect, epsilon = 1e-14);
        assert_relative_eq!(out.y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn angular_acc_degenerate_mass_skipped() {
        let out = centroidal_angular_acc(
            &[Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)],
            &[Vector3::new(5.0, 5.0, 5.0), Vector3::new(0.0, 1.0, 0.0)],
            Vector3::zeros(),
            Vector3::zeros(),
            &[3.0, 1.0],
        );
        assert_relative_eq!(out, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }
}
