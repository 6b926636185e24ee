//! Centroidal state estimation and bipedal gait control on a five-mass
//! reduced robot model, with a deterministic desk-scale verification plant.
//!
//! The crate is organized around the control pipeline:
//!
//! * [`five_mass`] — joint angles to mass positions, CoM and inertia axes
//! * [`estimation`] — IMU + limb-dynamics Kalman filtering of the centroidal state
//! * [`gait`] — LIPM reference trajectories, step planning, swing interpolation
//! * [`feedforward`] — rx/sp/tx steady-state compensation with LPF-integrators
//! * [`feedback`] — CMP-based CoM control, tilt-compensated stepping
//! * [`sim`] — reduced-dynamics plant with actuator lag, latency, backlash, pushes
//! * [`telemetry`] — CSV logs, run manifests, reproducibility headers

pub mod config;
pub mod estimation;
pub mod feedback;
pub mod feedforward;
pub mod five_mass;
pub mod gait;
pub mod math;
pub mod sim;
pub mod telemetry;
