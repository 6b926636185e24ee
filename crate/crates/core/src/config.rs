//! Robot and scenario configuration: defaults, TOML loading, and validation
//! with key-level diagnostics.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::estimation::EstimatorConfig;
use crate::feedback::FeedbackGains;
use crate::feedforward::FeedforwardConfig;
use crate::five_mass::{FiveMassConfig, LimbConfig, Side, TriangleParam};
use crate::gait::GaitConfig;
use crate::sim::actuator::ActuatorModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Default 20 kg desk-scale humanoid: 10 kg torso+head, 3 kg per leg,
/// 2 kg per arm.
pub fn default_robot() -> FiveMassConfig {
    let leg = |side: Side| LimbConfig {
        origin_offset: Vector3::new(0.0, side.sign() * 0.08, -0.1),
        triangle: TriangleParam::uniform(0.4, 0.4),
        n_joints: 3,
        weight: 3.0,
        side,
    };
    let arm = |side: Side| LimbConfig {
        origin_offset: Vector3::new(0.0, side.sign() * 0.18, 0.25),
        triangle: TriangleParam::uniform(0.25, 0.25),
        n_joints: 3,
        weight: 2.0,
        side,
    };
    FiveMassConfig {
        torso_weight: 10.0,
        torso_com_offset: Vector3::new(0.0, 0.0, 0.15),
        left_leg: leg(Side::Left),
        right_leg: leg(Side::Right),
        left_arm: arm(Side::Left),
        right_arm: arm(Side::Right),
        hip_center: Vector3::new(0.0, 0.0, -0.1),
        sensor_mount: Vector3::new(0.05, 0.0, 0.2),
        gravity: Vector3::new(0.0, 0.0, -9.81),
    }
}

/// Sensor noise levels of the synthesized measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Accelerometer white noise sigma (m/s^2).
    pub accel_sigma: f64,
    /// Gyro white noise sigma (rad/s).
    pub gyro_sigma: f64,
    /// Joint encoder quantization step (rad).
    pub encoder_quantum: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { accel_sigma: 0.05, gyro_sigma: 0.005, encoder_quantum: 0.001 }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self { accel_sigma: 0.0, gyro_sigma: 0.0, encoder_quantum: 0.0 }
    }
}

/// One scheduled push against the torso center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PushConfig {
    pub start: f64,
    /// Duration (s); the reference protocol uses 200 ms.
    #[serde(default = "default_push_duration")]
    pub duration: f64,
    pub force: [f64; 3],
}

fn default_push_duration() -> f64 {
    0.2
}

/// Plant-side parameters of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub period: f64,
    pub actuator: ActuatorModel,
    /// Constant support-hip-pitch bias (rad) modelling structural sag.
    pub sag_bias: f64,
    /// Enable direction-asymmetric hip pitch rate limits
    /// (forward-reaching steps slower than backward).
    pub asymmetric_reachability: bool,
    /// Support polygon extent in x around the foot center (back, front) (m).
    pub foot_extent: (f64, f64),
    /// Support polygon half-width in y (m).
    pub foot_half_width: f64,
    pub noise: NoiseConfig,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            period: 0.005,
            actuator: ActuatorModel::default(),
            sag_bias: 0.0,
            asymmetric_reachability: false,
            foot_extent: (0.07, 0.11),
            foot_half_width: 0.05,
            noise: NoiseConfig::default(),
        }
    }
}

/// The closed-loop controller toggles a scenario runs with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerToggles {
    /// "imu" or "limb".
    pub estimator: String,
    pub feedforward: bool,
    pub tilt_feedback: bool,
    pub step_feedback: bool,
}

impl Default for ControllerToggles {
    fn default() -> Self {
        Self {
            estimator: "limb".into(),
            feedforward: true,
            tilt_feedback: true,
            step_feedback: true,
        }
    }
}

/// Scenario kinds mirroring the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WalkInPlace,
    ForwardWalk,
    PushSweep,
    ArmSwing,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "walk_in_place" => Some(Self::WalkInPlace),
            "forward_walk" => Some(Self::ForwardWalk),
            "push_sweep" => Some(Self::PushSweep),
            "arm_swing" => Some(Self::ArmSwing),
            _ => None,
        }
    }
}

/// Full scenario description (structured text on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Commanded walking velocity (m/s).
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub pushes: Vec<PushConfig>,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub toggles: ControllerToggles,
    #[serde(default)]
    pub gait: GaitConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub feedback: FeedbackGains,
    #[serde(default)]
    pub feedforward: FeedforwardConfig,
    /// Push-sweep force levels (N); used by kind = push_sweep.
    #[serde(default)]
    pub push_levels: Vec<f64>,
    /// Pushes per level per direction in a sweep.
    #[serde(default = "default_pushes_per_level")]
    pub pushes_per_level: usize,
}

fn default_seed() -> u64 {
    42
}

fn default_pushes_per_level() -> usize {
    10
}

/// Default support-hip sag of the walk-in-place plant (rad). Without
/// compensation this bias produces a pronounced monotone sagittal drift.
pub const DEFAULT_SAG_BIAS: f64 = 0.008;

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, duration: f64) -> Self {
        let mut plant = PlantConfig::default();
        if kind == ScenarioKind::WalkInPlace {
            plant.sag_bias = DEFAULT_SAG_BIAS;
        }
        Self {
            kind,
            duration,
            seed: default_seed(),
            velocity: [0.0, 0.0],
            pushes: Vec::new(),
            plant,
            toggles: ControllerToggles::default(),
            gait: GaitConfig::default(),
            estimator: EstimatorConfig::default(),
            feedback: FeedbackGains::default(),
            feedforward: FeedforwardConfig::default(),
            push_levels: Vec::new(),
            pushes_per_level: default_pushes_per_level(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration <= 0.0 {
            return Err(ConfigError::Invalid {
                key: "duration".into(),
                message: format!("must be positive, got {}", self.duration),
            });
        }
        self.plant.actuator.validate(self.plant.period).map_err(|m| ConfigError::Invalid {
            key: "plant.actuator.latency".into(),
            message: m,
        })?;
        self.gait.validate().map_err(|e| ConfigError::Invalid {
            key: "gait".into(),
            message: e.to_string(),
        })?;
        self.feedback.validate().map_err(|m| ConfigError::Invalid {
            key: "feedback".into(),
            message: m,
        })?;
        for (i, p) in self.pushes.iter().enumerate() {
            if p.duration <= 0.0 {
                return Err(ConfigError::Invalid {
                    key: format!("pushes[{i}].duration"),
                    message: "must be positive".into(),
                });
            }
        }
        if crate::estimation::EstimatorVariant::parse(&self.toggles.estimator).is_none() {
            return Err(ConfigError::Invalid {
                key: "toggles.estimator".into(),
                message: format!("expected \"imu\" or \"limb\", got {:?}", self.toggles.estimator),
            });
        }
        Ok(())
    }

    pub fn velocity_vec(&self) -> Vector2<f64> {
        Vector2::new(self.velocity[0], self.velocity[1])
    }
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_robot(path: &Path) -> Result<FiveMassConfig, ConfigError> {
    let robot: FiveMassConfig = load_toml(path)?;
    robot.validate().map_err(|e| ConfigError::Invalid {
        key: "robot".into(),
        message: e.to_string(),
    })?;
    Ok(robot)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let sc: ScenarioConfig = load_toml(path)?;
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_robot_is_valid() {
        assert!(default_robot().validate().is_ok());
        assert!((default_robot().total_weight() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_roundtrip_toml() {
        let sc = ScenarioConfig::new(ScenarioKind::ForwardWalk, 10.0);
        let text = toml::to_string(&sc).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.kind, ScenarioKind::ForwardWalk);
        assert_eq!(back.seed, sc.seed);
    }

    #[test]
    fn invalid_latency_names_key() {
        let mut sc = ScenarioConfig::new(ScenarioKind::WalkInPlace, 5.0);
        sc.plant.actuator.latency = 0.0551;
        let err = sc.validate().unwrap_err();
        assert!(err.to_string().contains("plant.actuator.latency"), "{err}");
    }

    #[test]
    fn unknown_estimator_rejected() {
        let mut sc = ScenarioConfig::new(ScenarioKind::WalkInPlace, 5.0);
        sc.toggles.estimator = "magic".into();
        let err = sc.validate().unwrap_err();
        assert!(err.to_string().contains("toggles.estimator"), "{err}");
    }

    #[test]
    fn parse_error_reports_path() {
        let dir = std::env::temp_dir().join("centroidal_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.toml");
        std::fs::write(&p, "kind = \"forward_walk\"\nduration = \"oops\"\n").unwrap();
        let err = load_scenario(&p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml") && msg.contains("duration"), "{msg}");
    }
}
