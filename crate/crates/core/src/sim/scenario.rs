//! Scenario runners: single trials, push sweeps, and feedforward
//! calibration, all deterministic in the configured seed.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::estimation::{EstimatorVariant, SensorSample};
use crate::feedforward::FfCalibration;
use crate::five_mass::{FiveMassConfig, Side};

use super::controller::{ArmScript, Controller, ControllerSettings};
use super::plant::{Plant, PlantOutcome, PushEvent};

/// One log row per control tick; the fixed field order doubles as the CSV
/// column order.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub time: f64,
    pub truth_com: Vector3<f64>,
    pub truth_com_vel: Vector3<f64>,
    pub truth_com_acc: Vector3<f64>,
    pub truth_torso_acc: Vector3<f64>,
    pub est_com: Vector3<f64>,
    pub est_com_vel: Vector3<f64>,
    pub est_com_acc: Vector3<f64>,
    pub ref_com: Vector3<f64>,
    pub cop_ref: Vector2<f64>,
    pub cmp: Vector2<f64>,
    pub phase: f64,
    pub support: Side,
    pub exchanged: bool,
    pub tilt: f64,
    pub pivoting: bool,
    pub ff_latency: f64,
    pub ff_support_x: f64,
    pub step_offset_x: f64,
    pub world_shift_x: f64,
    pub left_foot_z: f64,
    pub right_foot_z: f64,
    pub com_cmd: Vector2<f64>,
    pub ctl_offset: Vector2<f64>,
    pub tx_com_ref: Vector2<f64>,
    pub swing_ref_z: f64,
    pub ff_swing_height: f64,
    pub ik_failures: usize,
    pub fallen: bool,
    /// The raw sensor reading fed to the estimator this tick; logged so the
    /// estimation pipeline can be replayed offline from the CSV alone.
    pub sensors: SensorSample,
}

/// Median, standard deviation, and mean absolute value of an error series.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorStats {
    pub median: f64,
    pub sd: f64,
    pub mean_abs: f64,
}

pub fn error_stats(series: &[f64]) -> ErrorStats {
    if series.is_empty() {
        return ErrorStats::default();
    }
    let n = series.len() as f64;
    let mut sorted: Vec<f64> = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let mean_abs = series.iter().map(|e| e.abs()).sum::<f64>() / n;
    ErrorStats { median, sd: var.sqrt(), mean_abs }
}

/// Full outcome of one closed-loop trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub outcome: PlantOutcome,
    pub fell_at: Option<f64>,
    pub rows: Vec<LogRow>,
    /// Estimation error statistics (estimate minus truth), per axis.
    pub vel_stats: [ErrorStats; 3],
    pub acc_stats: [ErrorStats; 3],
    /// Net sagittal CoM displacement over the trial (m).
    pub sagittal_drift: f64,
    /// RMS sagittal CoM tracking error after the settling window, measured
    /// against ground truth in the world frame (m).
    pub tracking_rms: f64,
    /// Same error measured in the robot's own odometry frame — the tracking
    /// quality the controller can actually observe and act on (m).
    pub ctl_tracking_rms: f64,
    pub steps: usize,
    pub calibration: FfCalibration,
    /// Latency estimate after each observed touchdown (s).
    pub latency_history: Vec<f64>,
}

fn settings_from(scenario: &ScenarioConfig) -> ControllerSettings {
    let variant = EstimatorVariant::parse(&scenario.toggles.estimator)
        .expect("validated estimator toggle");
    let mut s = ControllerSettings {
        variant,
        feedforward: scenario.toggles.feedforward,
        tilt_feedback: scenario.toggles.tilt_feedback,
        step_feedback: scenario.toggles.step_feedback,
        velocity: scenario.velocity_vec(),
        ..ControllerSettings::default()
    };
    match scenario.kind {
        ScenarioKind::WalkInPlace => {
            s.velocity = Vector2::zeros();
        }
        ScenarioKind::ForwardWalk => {}
        ScenarioKind::ArmSwing => {
            s.stepping = false;
            s.stance_com = Vector2::new(-0.03, 0.0);
            s.arm_script = Some(ArmScript { frequency: 0.5, amplitude: 1.1 });
        }
        ScenarioKind::PushSweep => {
            s.velocity = Vector2::zeros();
        }
    }
    s
}

/// Run one closed-loop trial. Deterministic given the scenario seed.
pub fn run_trial(robot: &FiveMassConfig, scenario: &ScenarioConfig) -> TrialResult {
    run_trial_with(robot, scenario, None)
}

/// As `run_trial`, optionally warm-starting the feedforward bank.
pub fn run_trial_with(
    robot: &FiveMassConfig,
    scenario: &ScenarioConfig,
    warm_start: Option<&FfCalibration>,
) -> TrialResult {
    let mut gait = scenario.gait.clone();
    gait.control_period = scenario.plant.period;
    let mut ff_cfg = scenario.feedforward.clone();
    // Several step periods.
    ff_cfg.time_constant = 4.0 * gait.step_duration();

    let settings = settings_from(scenario);
    let mut controller = Controller::new(
        robot.clone(),
        gait,
        scenario.estimator.clone(),
        scenario.feedback.clone(),
        ff_cfg,
        settings,
    );
    if let Some(cal) = warm_start {
        controller.ff.load_calibration(cal);
    }

    let mut plant = Plant::new(
        robot.clone(),
        scenario.plant.clone(),
        Side::Right,
        Vector2::new(0.0, scenario.gait.stance_width / 2.0),
        &controller.initial_commands(),
    );
    for p in &scenario.pushes {
        plant.schedule_push(PushEvent::from(p));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let dt = scenario.plant.period;
    let ticks = (scenario.duration / dt).round() as usize;

    let mut rows = Vec::with_capacity(ticks);
    let mut fell_at = None;
    let mut steps = 0;
    let mut latency_history = Vec::new();
    let mut prev_latency_obs = 0usize;

    for _ in 0..ticks {
        let sensors = plant.synthesize_sensors(&scenario.plant.noise, &mut rng);
        let out = controller.tick(&sensors);
        let truth = plant.step(&out.commands);
        if truth.exchanged {
            steps += 1;
        }
        if out.estimate.support_changed {
            latency_history.push(out.channels.latency);
            prev_latency_obs += 1;
        }
        let _ = prev_latency_obs;
        let fallen = plant.outcome() == PlantOutcome::Fallen;
        rows.push(LogRow {
            time: truth.time,
            truth_com: truth.com,
            truth_com_vel: truth.com_velocity,
            truth_com_acc: truth.com_acceleration,
            truth_torso_acc: truth.torso_mass_acceleration,
            est_com: out.estimate.state.com,
            est_com_vel: out.estimate.state.com_velocity,
            est_com_acc: out.estimate.state.com_acceleration,
            ref_com: out.com_ref,
            cop_ref: out.cop_ref,
            cmp: out.cmp,
            phase: out.phase,
            support: truth.support,
            exchanged: truth.exchanged,
            tilt: truth.tilt,
            pivoting: truth.pivoting,
            ff_latency: out.channels.latency,
            ff_support_x: out.channels.support_offset.x,
            step_offset_x: out.step_offset.x,
            world_shift_x: out.world_shift.x,
            left_foot_z: truth.left_foot.z,
            right_foot_z: truth.right_foot.z,
            com_cmd: out.com_command,
            ctl_offset: out.ctl_offset,
            tx_com_ref: out.tx_com_ref,
            swing_ref_z: out.swing_ref_z,
            ff_swing_height: out.channels.swing_height,
            ik_failures: controller.ik_failures,
            fallen,
            sensors,
        });
        if fallen {
            fell_at = Some(truth.time);
            break;
        }
    }

    // Error statistics over the converged window (skip the first second).
    let skip = (1.0 / dt) as usize;
    let window = if rows.len() > skip { &rows[skip..] } else { &rows[..] };
    let axis_stats = |f: &dyn Fn(&LogRow) -> (Vector3<f64>, Vector3<f64>)| {
        let mut stats = [ErrorStats::default(); 3];
        for axis in 0..3 {
            let series: Vec<f64> =
                window.iter().map(|r| { let (e, t) = f(r); e[axis] - t[axis] }).collect();
            stats[axis] = error_stats(&series);
        }
        stats
    };
    let vel_stats = axis_stats(&|r: &LogRow| (r.est_com_vel, r.truth_com_vel));
    let acc_stats = axis_stats(&|r: &LogRow| (r.est_com_acc, r.truth_com_acc));

    let sagittal_drift = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => b.truth_com.x - a.truth_com.x,
        _ => 0.0,
    };
    // Tracking error in the reference world after the settling window
    // (8 steps at the nominal rate).
    let settle = ((8.0 * scenario.gait.step_duration()) / dt) as usize;
    let tail = if rows.len() > settle { &rows[settle..] } else { &rows[..] };
    let rms_of = |err: &dyn Fn(&LogRow) -> f64| {
        if tail.is_empty() {
            0.0
        } else {
            (tail.iter().map(|r| err(r) * err(r)).sum::<f64>() / tail.len() as f64).sqrt()
        }
    };
    let tracking_rms = rms_of(&|r: &LogRow| r.ref_com.x - r.truth_com.x);
    let ctl_tracking_rms = rms_of(&|r: &LogRow| r.ref_com.x - (r.est_com.x + r.world_shift_x));

    TrialResult {
        outcome: plant.outcome(),
        fell_at,
        rows,
        vel_stats,
        acc_stats,
        sagittal_drift,
        tracking_rms,
        ctl_tracking_rms,
        steps,
        calibration: controller.ff.calibration(),
        latency_history,
    }
}

/// Outcome of one direction/level cell in a push sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub direction: f64,
    pub force: f64,
    pub recovered: usize,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Highest force with at least one recovery in the given direction
    /// (+1 forward, -1 backward).
    pub fn max_recovered(&self, direction: f64) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.direction == direction && c.recovered > 0)
            .map(|c| c.force)
            .fold(0.0, f64::max)
    }

    pub fn recovered_at(&self, direction: f64, force: f64) -> usize {
        self.cells
            .iter()
            .find(|c| c.direction == direction && (c.force - force).abs() < 1e-9)
            .map_or(0, |c| c.recovered)
    }
}

/// Push-sweep protocol: `pushes_per_level` pushes per force level per
/// direction, forces increasing; each push is an isolated trial.
pub fn run_push_sweep(robot: &FiveMassConfig, scenario: &ScenarioConfig) -> SweepResult {
    let mut cells = Vec::new();
    for &force in &scenario.push_levels {
        for direction in [1.0, -1.0] {
            let mut recovered = 0;
            for k in 0..scenario.pushes_per_level {
                let mut sc = scenario.clone();
                sc.kind = ScenarioKind::WalkInPlace;
                sc.duration = 6.0;
                sc.seed = scenario
                    .seed
                    .wrapping_add(k as u64)
                    .wrapping_add((force as u64) << 16)
                    .wrapping_add(if direction > 0.0 { 0 } else { 1 << 32 });
                sc.pushes = vec![crate::config::PushConfig {
                    start: 3.0 + 0.05 * k as f64,
                    duration: 0.2,
                    force: [direction * force, 0.0, 0.0],
                }];
                let result = run_trial(robot, &sc);
                if result.outcome == PlantOutcome::Nominal {
                    recovered += 1;
                }
            }
            cells.push(SweepCell {
                direction,
                force,
                recovered,
                trials: scenario.pushes_per_level,
            });
        }
    }
    SweepResult { cells }
}

/// Feedforward calibration report.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub calibration: FfCalibration,
    /// Step count after which the latency estimate first entered (and
    /// stayed in) a 10 ms band around its final value.
    pub latency_settle_steps: Option<usize>,
    pub latency_history: Vec<f64>,
    pub steps: usize,
}

/// Run the calibration procedure: a walk at the scenario velocity with the
/// feedforward integrators enabled.
pub fn calibrate_feedforward(
    robot: &FiveMassConfig,
    scenario: &ScenarioConfig,
    warm_start: Option<&FfCalibration>,
) -> CalibrationReport {
    let mut sc = scenario.clone();
    sc.toggles.feedforward = true;
    let result = run_trial_with(robot, &sc, warm_start);

    let final_latency = result.latency_history.last().copied().unwrap_or(0.0);
    let latency_settle_steps = result
        .latency_history
        .iter()
        .position(|&l| (l - final_latency).abs() <= 0.010)
        .map(|i| i + 1);

    CalibrationReport {
        calibration: result.calibration,
        latency_settle_steps,
        latency_history: result.latency_history,
        steps: result.steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_robot, ScenarioConfig, ScenarioKind};

    #[test]
    fn error_stats_basics() {
        let s = error_stats(&[-1.0, 0.0, 1.0, 2.0]);
        assert!((s.median - 0.5).abs() < 1e-12);
        assert!((s.mean_abs - 1.0).abs() < 1e-12);
        let expected_sd = (((-1.5f64).powi(2) + 0.25 + 0.25 + 2.25) / 4.0).sqrt();
        assert!((s.sd - expected_sd).abs() < 1e-12);
    }

    #[test]
    fn walk_in_place_survives() {
        let robot = default_robot();
        let mut sc = ScenarioConfig::new(ScenarioKind::WalkInPlace, 5.0);
        sc.plant.noise = crate::config::NoiseConfig::zero();
        let result = run_trial(&robot, &sc);
        assert_eq!(result.outcome, PlantOutcome::Nominal, "fell at {:?}", result.fell_at);
        assert!(result.steps >= 8, "only {} steps", result.steps);
    }

    #[test]
    fn trial_is_deterministic() {
        let robot = default_robot();
        let mut sc = ScenarioConfig::new(ScenarioKind::WalkInPlace, 2.0);
        sc.seed = 99;
        let a = run_trial(&robot, &sc);
        let b = run_trial(&robot, &sc);
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.truth_com, rb.truth_com);
            assert_eq!(ra.est_com_acc, rb.est_com_acc);
        }
    }
}
