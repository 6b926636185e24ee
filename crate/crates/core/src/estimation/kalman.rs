//! Per-axis constant-jerk Kalman filters over (value, rate, acceleration)
//! triplets, with Joseph-form covariance updates.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KalmanError {
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("covariance lost positive semidefiniteness (min eigenvalue {0:.3e})")]
    CovarianceNotPsd(f64),
}

/// Noise configuration of one triplet filter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TripletNoise {
    /// White-noise jerk spectral density of the process model.
    pub process_jerk: f64,
    /// Variance of the (position/angle) measurement.
    pub meas_value: f64,
    /// Variance of the acceleration measurement.
    pub meas_acceleration: f64,
}

/// Three-state filter for one axis: value, rate, acceleration.
#[derive(Debug, Clone, Copy)]
pub struct AxisKf {
    pub state: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl AxisKf {
    pub fn new(initial_variance: f64) -> Self {
        Self {
            state: Vector3::zeros(),
            covariance: Matrix3::identity() * initial_variance,
        }
    }

    fn transition(dt: f64) -> Matrix3<f64> {
        Matrix3::new(
            1.0, dt, 0.5 * dt * dt, //
            0.0, 1.0, dt, //
            0.0, 0.0, 1.0,
        )
    }

    fn process_noise(dt: f64, q: f64) -> Matrix3<f64> {
        let d2 = dt * dt;
        let d3 = d2 * dt;
        let d4 = d3 * dt;
        let d5 = d4 * dt;
        q * Matrix3::new(
            d5 / 20.0, d4 / 8.0, d3 / 6.0, //
            d4 / 8.0, d3 / 3.0, d2 / 2.0, //
            d3 / 6.0, d2 / 2.0, dt,
        )
    }

    fn scalar_update(&mut self, h: Vector3<f64>, z: f64, r: f64) {
        let innovation = z - h.dot(&self.state);
        let s = (h.transpose() * self.covariance * h)[0] + r;
        let gain = self.covariance * h / s;
        self.state += gain * innovation;
        // Joseph form keeps the covariance symmetric PSD under roundoff.
        let ikh = Matrix3::identity() - gain * h.transpose();
        self.covariance = ikh * self.covariance * ikh.transpose() + gain * r * gain.transpose();
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }

    fn check_psd(&self) -> Result<(), KalmanError> {
        let eig = self.covariance.symmetric_eigenvalues();
        let min = eig.min();
        if min < -1e-10 {
            return Err(KalmanError::CovarianceNotPsd(min));
        }
        Ok(())
    }

    /// Predict + update with value and acceleration measurements.
    ///
    /// `acc_inflation` multiplies the acceleration measurement variance, used
    /// when the measurement comes from finite differentiation.
    pub fn step(
        &mut self,
        value_meas: f64,
        acc_meas: f64,
        dt: f64,
        noise: &TripletNoise,
        acc_inflation: f64,
    ) -> Result<(), KalmanError> {
        if dt <= 0.0 {
            return Err(KalmanError::NonPositiveDt(dt));
        }
        let f = Self::transition(dt);
        self.state = f * self.state;
        self.covariance =
            f * self.covariance * f.transpose() + Self::process_noise(dt, noise.process_jerk);

        self.scalar_update(Vector3::new(1.0, 0.0, 0.0), value_meas, noise.meas_value);
        self.scalar_update(
            Vector3::new(0.0, 0.0, 1.0),
            acc_meas,
            noise.meas_acceleration * acc_inflation,
        );
        self.check_psd()
    }

    /// Variant without the acceleration channel (value measurement only).
    pub fn step_value_only(
        &mut self,
        value_meas: f64,
        dt: f64,
        noise: &TripletNoise,
    ) -> Result<(), KalmanError> {
        if dt <= 0.0 {
            return Err(KalmanError::NonPositiveDt(dt));
        }
        let f = Self::transition(dt);
        self.state = f * self.state;
        self.covariance =
            f * self.covariance * f.transpose() + Self::process_noise(dt, noise.process_jerk);
        self.scalar_update(Vector3::new(1.0, 0.0, 0.0), value_meas, noise.meas_value);
        self.check_psd()
    }
}

/// Three decoupled axis filters forming a 9-state estimate.
#[derive(Debug, Clone, Copy)]
pub struct TripletKf {
    pub axes: [AxisKf; 3],
}

impl TripletKf {
    pub fn new(initial_variance: f64) -> Self {
        Self { axes: [AxisKf::new(initial_variance); 3] }
    }

    pub fn seed(&mut self, value: Vector3<f64>) {
        for (axis, v) in self.axes.iter_mut().zip(value.iter()) {
            axis.state = Vector3::new(*v, 0.0, 0.0);
        }
    }

    pub fn step(
        &mut self,
        value_meas: Vector3<f64>,
        acc_meas: Vector3<f64>,
        dt: f64,
        noise: &TripletNoise,
        acc_inflation: f64,
    ) -> Result<(), KalmanError> {
        for i in 0..3 {
            self.axes[i].step(value_meas[i], acc_meas[i], dt, noise, acc_inflation)?;
        }
        Ok(())
    }

    pub fn step_value_only(
        &mut self,
        value_meas: Vector3<f64>,
        dt: f64,
        noise: &TripletNoise,
    ) -> Result<(), KalmanError> {
        for i in 0..3 {
            self.axes[i].step_value_only(value_meas[i], dt, noise)?;
        }
        Ok(())
    }

    pub fn value(&self) -> Vector3<f64> {
        Vector3::new(self.axes[0].state[0], self.axes[1].state[0], self.axes[2].state[0])
    }

    pub fn rate(&self) -> Vector3<f64> {
        Vector3::new(self.axes[0].state[1], self.axes[1].state[1], self.axes[2].state[1])
    }

    pub fn acceleration(&self) -> Vector3<f64> {
        Vector3::new(self.axes[0].state[2], self.axes[1].state[2], self.axes[2].state[2])
    }

    /// Block-diagonal 9x9 covariance over (x, y, z) triplets.
    pub fn covariance9(&self) -> SMatrix<f64, 9, 9> {
        let mut cov = SMatrix::<f64, 9, 9>::zeros();
        for (i, axis) in self.axes.iter().enumerate() {
            cov.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&axis.covariance);
        }
        cov
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn noise() -> TripletNoise {
        TripletNoise { process_jerk: 50.0, meas_value: 1e-4, meas_acceleration: 1e-2 }
    }

    #[test]
    fn rejects_non_positive_dt() {
        let mut kf = AxisKf::new(1.0);
        assert!(kf.step(0.0, 0.0, 0.0, &noise(), 1.0).is_err());
    }

    #[test]
    fn zero_measurements_stay_zero() {
        let mut kf = AxisKf::new(1.0);
        for _ in 0..500 {
            kf.step(0.0, 0.0, 0.01, &noise(), 1.0).unwrap();
        }
        assert_relative_eq!(kf.state.norm(), 0.0, epsilon = 1e-12);
        // Covariance settles to a steady state.
        let before = kf.covariance;
        kf.step(0.0, 0.0, 0.01, &noise(), 1.0).unwrap();
        assert!((kf.covariance - before).norm() < 1e-9);
    }

    #[test]
    fn converges_to_constant_acceleration_truth() {
        // Zero-noise constant-acceleration signal at 100 Hz.
        let a = 2.0;
        let mut kf = AxisKf::new(1.0);
        let dt = 0.01;
        let mut final_acc = 0.0;
        for k in 1..=50 {
            let t = k as f64 * dt;
            let pos = 0.5 * a * t * t;
            kf.step(pos, a, dt, &noise(), 1.0).unwrap();
            final_acc = kf.state[2];
        }
        assert!((final_acc - a).abs() <= 0.01 * a, "acc {final_acc} vs {a}");
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut kf = AxisKf::new(10.0);
        for k in 0..10_000 {
            let t = k as f64 * 0.01;
            kf.step((3.0 * t).sin(), -9.0 * (3.0 * t).sin(), 0.01, &noise(), 1.0).unwrap();
            let asym = (kf.covariance - kf.covariance.transpose()).norm();
            assert!(asym <= 1e-12);
        }
    }

    #[test]
    fn triplet_covariance_block_diagonal() {
        let kf = TripletKf::new(2.5);
        let cov = kf.covariance9();
        assert_relative_eq!(cov[(0, 0)], 2.5);
        assert_relative_eq!(cov[(0, 3)], 0.0);
    }
}
