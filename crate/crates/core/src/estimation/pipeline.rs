//! Full estimation pipeline: pose reconstruction anchored at the support
//! foot, acceleration fusion, and the two triplet Kalman filters.

use nalgebra::Vector3;

use crate::five_mass::{
    compute_state, limb_end_torso, limb_jacobian_torso, FiveMassConfig, Side, TorsoPose,
};
use crate::math::{euler_zyx, unwrap_near};

use super::{
    centroidal_angular_acc, centroidal_linear_acc, gyro_rate_to_acc, imu_to_torso_com_acc,
    limb_global_acc, support_foot_select, CentroidalState, EstimationError, EstimatorConfig,
    SensorSample, TripletKf,
};

/// Which acceleration source feeds the linear filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorVariant {
    /// Torso acceleration stands in for the CoM acceleration.
    ImuOnly,
    /// Five-mass accelerations including limb dynamics.
    LimbDynamics,
}

impl EstimatorVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "imu" => Some(Self::ImuOnly),
            "limb" => Some(Self::LimbDynamics),
            _ => None,
        }
    }
}

/// Per-tick estimator output with diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateFrame {
    pub state: CentroidalState,
    pub support: Side,
    pub support_changed: bool,
    pub torso_position: Vector3<f64>,
    pub left_foot_world: Vector3<f64>,
    pub right_foot_world: Vector3<f64>,
    /// CoM position from kinematics alone (the position measurement).
    pub kinematic_com: Vector3<f64>,
    /// Fused acceleration measurement fed to the linear filter.
    pub measured_com_acc: Vector3<f64>,
    /// World-frame torso mass acceleration (IMU-only quantity).
    pub torso_mass_acc: Vector3<f64>,
    pub gyro_saturated: bool,
}

pub struct CentroidalEstimator {
    robot: FiveMassConfig,
    config: EstimatorConfig,
    variant: EstimatorVariant,
    linear: TripletKf,
    angular: TripletKf,
    support: Side,
    /// World position of the support foot (z pinned to the ground).
    anchor: Vector3<f64>,
    prev_time: Option<f64>,
    prev_gyro: Vector3<f64>,
    prev_limb_vel: [Vector3<f64>; 4],
    prev_theta: Vector3<f64>,
    initialized: bool,
}

impl CentroidalEstimator {
    pub fn new(robot: FiveMassConfig, config: EstimatorConfig, variant: EstimatorVariant) -> Self {
        let linear = TripletKf::new(config.initial_variance);
        let angular = TripletKf::new(config.initial_variance);
        Self {
            robot,
            config,
            variant,
            linear,
            angular,
            support: Side::Right,
            anchor: Vector3::zeros(),
            prev_time: None,
            prev_gyro: Vector3::zeros(),
            prev_limb_vel: [Vector3::zeros(); 4],
            prev_theta: Vector3::zeros(),
            initialized: false,
        }
    }

    pub fn variant(&self) -> EstimatorVariant {
        self.variant
    }

    pub fn support(&self) -> Side {
        self.support
    }

    /// Reset odometry so the given side is the support foot at `anchor`.
    pub fn reset_support(&mut self, side: Side, anchor: Vector3<f64>) {
        self.support = side;
        self.anchor = anchor;
    }

    fn foot_torso(&self, sample: &SensorSample, side: Side) -> Vector3<f64> {
        match side {
            Side::Left => limb_end_torso(&sample.joints.left_leg.q, &self.robot.left_leg)
                .unwrap_or_else(|_| Vector3::zeros()),
            Side::Right => limb_end_torso(&sample.joints.right_leg.q, &self.robot.right_leg)
                .unwrap_or_else(|_| Vector3::zeros()),
        }
    }

    pub fn update(&mut self, sample: &SensorSample) -> Result<EstimateFrame, EstimationError> {
        let r_t = sample.torso_orientation;

        // Pose reconstruction: torso position from the support-foot anchor.
        let foot_sup = self.foot_torso(sample, self.support);
        let torso_position = self.anchor - r_t * foot_sup;
        let left_foot = torso_position + r_t * self.foot_torso(sample, Side::Left);
        let right_foot = torso_position + r_t * self.foot_torso(sample, Side::Right);

        let new_support = support_foot_select(
            left_foot.z,
            right_foot.z,
            self.support,
            self.config.support_exchange_threshold,
        );
        let support_changed = new_support != self.support;
        if support_changed {
            self.support = new_support;
            let mut new_anchor = match new_support {
                Side::Left => left_foot,
                Side::Right => right_foot,
            };
            new_anchor.z = 0.0;
            self.anchor = new_anchor;
        }
        // Recompute with the (possibly) updated anchor.
        let foot_sup = self.foot_torso(sample, self.support);
        let torso_position = self.anchor - r_t * foot_sup;

        let torso = TorsoPose { position: torso_position, orientation: r_t };
        let kin = compute_state(&self.robot, &sample.joints, &torso)?;
        let theta_meas = {
            let raw = euler_zyx(&kin.inertia_orientation);
            Vector3::new(
                unwrap_near(raw.x, self.prev_theta.x),
                unwrap_near(raw.y, self.prev_theta.y),
                unwrap_near(raw.z, self.prev_theta.z),
            )
        };

        let dt = match self.prev_time {
            Some(t0) => sample.timestamp - t0,
            None => 0.0,
        };

        if !self.initialized || dt <= 0.0 {
            self.linear.seed(kin.com);
            self.angular.seed(theta_meas);
            self.prev_time = Some(sample.timestamp);
            self.prev_gyro = sample.gyro;
            self.prev_theta = theta_meas;
            self.prev_limb_vel = self.limb_velocities(sample);
            self.initialized = true;
            return Ok(self.frame(
                sample,
                self.support,
                support_changed,
                torso_position,
                left_foot,
                right_foot,
                kin.com,
                Vector3::zeros(),
                Vector3::zeros(),
            ));
        }

        // Angular acceleration of the torso from gyro differencing.
        let theta_ddot = gyro_rate_to_acc(self.prev_gyro, sample.gyro, dt)?;
        self.prev_gyro = sample.gyro;

        let (_, torso_mass_acc) = imu_to_torso_com_acc(
            sample.accel,
            theta_ddot,
            &r_t,
            self.robot.sensor_mount,
            self.robot.torso_com_offset,
            self.robot.gravity,
        );

        let limb_vel = self.limb_velocities(sample);
        let (acc_meas, mass_accs) = match self.variant {
            EstimatorVariant::ImuOnly => (torso_mass_acc, [torso_mass_acc; 5]),
            EstimatorVariant::LimbDynamics => {
                let limbs = self.robot.limbs();
                let mut accs = [torso_mass_acc; 5];
                for i in 0..4 {
                    let rel_acc = (limb_vel[i] - self.prev_limb_vel[i]) / dt;
                    accs[i + 1] = limb_global_acc(
                        torso_mass_acc,
                        theta_ddot,
                        limbs[i].origin_offset,
                        self.robot.torso_com_offset,
                        rel_acc,
                        &r_t,
                    );
                }
                let fused = centroidal_linear_acc(&accs, &self.robot.weights())?;
                (fused, accs)
            }
        };
        self.prev_limb_vel = limb_vel;

        self.linear.step(
            kin.com,
            acc_meas,
            dt,
            &self.config.linear_noise,
            self.config.diff_covariance_inflation,
        )?;

        let angular_acc_meas = centroidal_angular_acc(
            &kin.masses,
            &mass_accs,
            kin.com,
            acc_meas,
            &self.robot.weights(),
        );
        self.angular.step(
            theta_meas,
            angular_acc_meas,
            dt,
            &self.config.angular_noise,
            self.config.diff_covariance_inflation,
        )?;

        self.prev_time = Some(sample.timestamp);
        self.prev_theta = theta_meas;

        Ok(self.frame(
            sample,
            self.support,
            support_changed,
            torso_position,
            left_foot,
            right_foot,
            kin.com,
            acc_meas,
            torso_mass_acc,
        ))
    }

    /// Torso-frame limb mass velocities J_* q̇.
    fn limb_velocities(&self, sample: &SensorSample) -> [Vector3<f64>; 4] {
        let limbs = self.robot.limbs();
        let joints = sample.joints.limbs();
        let mut out = [Vector3::zeros(); 4];
        for i in 0..4 {
            if joints[i].qd.len() != joints[i].q.len() {
                continue;
            }
            if let Ok(jac) = limb_jacobian_torso(&joints[i].q, limbs[i]) {
                let qd = nalgebra::DVector::from_column_slice(&joints[i].qd);
                let v = jac * qd;
                out[i] = Vector3::new(v[0], v[1], v[2]);
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn frame(
        &self,
        sample: &SensorSample,
        support: Side,
        support_changed: bool,
        torso_position: Vector3<f64>,
        left_foot: Vector3<f64>,
        right_foot: Vector3<f64>,
        kinematic_com: Vector3<f64>,
        measured_com_acc: Vector3<f64>,
        torso_mass_acc: Vector3<f64>,
    ) -> EstimateFrame {
        EstimateFrame {
            state: CentroidalState {
                com: self.linear.value(),
                com_velocity: self.linear.rate(),
                com_acceleration: self.linear.acceleration(),
                inertia_angles: self.angular.value(),
                inertia_rates: self.angular.rate(),
                inertia_accelerations: self.angular.acceleration(),
                valid: self.initialized,
            },
            support,
            support_changed,
            torso_position,
            left_foot_world: left_foot,
            right_foot_world: right_foot,
            kinematic_com,
            measured_com_acc,
            torso_mass_acc,
            gyro_saturated: sample.gyro_saturated(),
        }
    }

    pub fn linear_filter(&self) -> &TripletKf {
        &self.linear
    }

    pub fn angular_filter(&self) -> &TripletKf {
        &self.angular
    }
}
