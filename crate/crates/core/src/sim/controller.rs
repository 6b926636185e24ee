//! The assembled walking controller: gait references, centroidal estimation,
//! feedforward compensation, and reactive feedback, emitting joint commands.

use nalgebra::{Vector2, Vector3};
use std::collections::VecDeque;

use crate::estimation::{CentroidalEstimator, EstimateFrame, EstimatorVariant};
use crate::estimation::{EstimatorConfig, SensorSample};
use crate::feedback::{
    compute_cmp, eos_predict, step_feedback, tilt_swing_transform, ComZmpController,
    FeedbackGains, TiltFilter, TiltState,
};
use crate::feedforward::{
    apply_to_tx, mirror_lateral, FeedforwardBank, FeedforwardConfig, FfChannelSet, LatencySample,
    ModelSnapshot,
};
use crate::five_mass::{compute_state, FiveMassConfig, JointState, LimbJoints, Side, TorsoPose};
use crate::gait::{lipm_propagate, GaitConfig, GaitGenerator, LipmState};
use crate::sim::ik::leg_ik;
use crate::sim::plant::JointCommands;

/// Scripted shoulder-pitch oscillation (extended arms).
#[derive(Debug, Clone, Copy)]
pub struct ArmScript {
    pub frequency: f64,
    pub amplitude: f64,
}

/// Behavior switches of one controller instance.
#[derive(Debug, Clone)]
pub struct ControllerSettings {
    pub variant: EstimatorVariant,
    pub feedforward: bool,
    pub tilt_feedback: bool,
    pub step_feedback: bool,
    /// False runs the stance-only mode (no gait, fixed feet).
    pub stepping: bool,
    pub velocity: Vector2<f64>,
    /// Stance-mode CoM offset from the stance center (m).
    pub stance_com: Vector2<f64>,
    /// Counter-swing shoulder amplitude while walking (rad).
    pub arm_swing_amplitude: f64,
    pub arm_script: Option<ArmScript>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            variant: EstimatorVariant::LimbDynamics,
            feedforward: true,
            tilt_feedback: true,
            step_feedback: true,
            stepping: true,
            velocity: Vector2::zeros(),
            stance_com: Vector2::zeros(),
            arm_swing_amplitude: 0.25,
            arm_script: None,
        }
    }
}

/// Everything one control tick produces, for the plant and the logs.
#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub commands: JointCommands,
    pub estimate: EstimateFrame,
    pub com_ref: Vector3<f64>,
    pub com_command: Vector2<f64>,
    pub cop_ref: Vector2<f64>,
    pub phase: f64,
    pub support_ref: Side,
    pub cmp: Vector2<f64>,
    pub tilt: TiltState,
    pub channels: FfChannelSet,
    pub step_offset: Vector2<f64>,
    /// Accumulated CoM-ZMP feedback offset added to the reference.
    pub ctl_offset: Vector2<f64>,
    /// Latency-forwarded reference the command is built on.
    pub tx_com_ref: Vector2<f64>,
    /// Commanded swing-foot height after all corrections.
    pub swing_ref_z: f64,
    pub tx_extrapolated: bool,
    /// Estimator-world to reference-world shift.
    pub world_shift: Vector2<f64>,
}

/// Per-step running sums of the side-unified rx/sp centroidal quantities;
/// the feedforward integrators consume the step means, which average out the
/// gait-synchronous transients that dominate any single instant.
#[derive(Debug, Clone, Copy, Default)]
struct FfAccumulator {
    rx_sup: Vector3<f64>,
    rx_sw: Vector3<f64>,
    rx_vel: Vector3<f64>,
    sp_sup: Vector3<f64>,
    sp_sw: Vector3<f64>,
    sp_vel: Vector3<f64>,
    n: usize,
    n_vel: usize,
}

pub struct Controller {
    robot: FiveMassConfig,
    settings: ControllerSettings,
    gait: GaitGenerator,
    estimator: CentroidalEstimator,
    pub ff: FeedforwardBank,
    com_ctl: ComZmpController,
    /// Low-pass state of the measured CMP; raw double-differentiated
    /// acceleration feeds back unstably at the control rate.
    cmp_filt: Vector2<f64>,
    tilt_filter: TiltFilter,
    gains: FeedbackGains,
    time: f64,
    dt: f64,
    shift: Vector2<f64>,
    prev_phase: f64,
    /// Commanded swing-lift height at which the estimator is expected to
    /// register the support switch.
    lift_threshold: f64,
    prev_swing_ref_z: f64,
    /// Feedback hold-off after a support exchange; the anchor swap puts a
    /// one-tick spike through the differentiated estimates.
    fb_freeze_until: f64,
    expected_touchdowns: VecDeque<f64>,
    ff_acc: FfAccumulator,
    /// Reference-world shift increment at the last accepted exchange: the
    /// odometry-visible part of any per-step world drift.
    shift_step: Vector2<f64>,
    last_commands: JointCommands,
    stance_feet: (Vector3<f64>, Vector3<f64>),
    com_height: f64,
    /// Leg IK targets that had to fall back to the previous commands.
    pub ik_failures: usize,
}

impl Controller {
    pub fn new(
        robot: FiveMassConfig,
        gait_cfg: GaitConfig,
        est_cfg: EstimatorConfig,
        gains: FeedbackGains,
        ff_cfg: FeedforwardConfig,
        settings: ControllerSettings,
    ) -> Self {
        let w = gait_cfg.stance_width;
        let h = gait_cfg.com_height;
        let dt = gait_cfg.control_period;
        let right = Vector3::new(0.0, w / 2.0, 0.0);
        let left = Vector3::new(0.0, -w / 2.0, 0.0);

        let mut gait = GaitGenerator::new(gait_cfg.clone(), Side::Right, Vector2::new(0.0, w / 2.0));
        gait.set_velocity(settings.velocity, 0.0);

        let lift_threshold = est_cfg.support_exchange_threshold;
        let mut estimator = CentroidalEstimator::new(robot.clone(), est_cfg, settings.variant);
        estimator.reset_support(Side::Right, right);

        let mut ff = FeedforwardBank::new(ff_cfg);
        ff.set_enabled(settings.feedforward);

        let mut ctl = Self {
            robot,
            settings,
            gait,
            estimator,
            ff,
            com_ctl: ComZmpController::new(),
            cmp_filt: Vector2::zeros(),
            tilt_filter: TiltFilter::new(),
            gains,
            time: 0.0,
            dt,
            shift: Vector2::zeros(),
            prev_phase: 0.0,
            lift_threshold,
            prev_swing_ref_z: 0.0,
            fb_freeze_until: 0.0,
            expected_touchdowns: VecDeque::new(),
            ff_acc: FfAccumulator::default(),
            shift_step: Vector2::zeros(),
            last_commands: JointCommands {
                left_leg: [0.0; 3],
                right_leg: [0.0; 3],
                left_arm: [0.0; 3],
                right_arm: [0.0; 3],
            },
            stance_feet: (left, right),
            com_height: h,
            ik_failures: 0,
        };
        let com0 = Vector3::new(
            ctl.settings.stance_com.x,
            ctl.settings.stance_com.y,
            h,
        );
        ctl.last_commands = ctl.solve_commands(com0, left, right, [0.0; 3], [0.0; 3]);
        ctl
    }

    /// Commands matching the initial standing pose, for plant construction.
    pub fn initial_commands(&self) -> JointCommands {
        self.last_commands
    }

    pub fn estimator(&self) -> &CentroidalEstimator {
        &self.estimator
    }

    pub fn gait(&self) -> &GaitGenerator {
        &self.gait
    }

    /// CoM offset from the torso origin implied by commanded joints.
    fn com_offset(&self, commands: &JointCommands) -> Vector3<f64> {
        let joints = JointState {
            left_leg: LimbJoints { q: commands.left_leg.to_vec(), qd: vec![0.0; 3] },
            right_leg: LimbJoints { q: commands.right_leg.to_vec(), qd: vec![0.0; 3] },
            left_arm: LimbJoints { q: commands.left_arm.to_vec(), qd: vec![0.0; 3] },
            right_arm: LimbJoints { q: commands.right_arm.to_vec(), qd: vec![0.0; 3] },
        };
        compute_state(&self.robot, &joints, &TorsoPose::identity())
            .map(|s| s.com)
            .unwrap_or_else(|_| Vector3::new(0.0, 0.0, 0.0))
    }

    /// Solve leg IK for a commanded CoM and world foot targets; the torso
    /// position follows from the commanded-joint CoM offset (fixed point,
    /// two refinement passes).
    fn solve_commands(
        &mut self,
        com: Vector3<f64>,
        left_foot: Vector3<f64>,
        right_foot: Vector3<f64>,
        left_arm: [f64; 3],
        right_arm: [f64; 3],
    ) -> JointCommands {
        let mut cmds = JointCommands { left_arm, right_arm, ..self.last_commands };
        for pass in 0..3 {
            let offset = self.com_offset(&cmds);
            let torso = com - offset;
            match leg_ik(left_foot - torso, &self.robot.left_leg) {
                Ok(q) => cmds.left_leg = q,
                Err(_) => {
                    if pass == 2 {
                        self.ik_failures += 1;
                    }
                }
            }
            match leg_ik(right_foot - torso, &self.robot.right_leg) {
                Ok(q) => cmds.right_leg = q,
                Err(_) => {
                    if pass == 2 {
                        self.ik_failures += 1;
                    }
                }
            }
        }
        cmds
    }

    fn filter_cmp(&mut self, raw: Vector2<f64>) -> Vector2<f64> {
        const CMP_FILTER_TAU: f64 = 0.05;
        let alpha = self.dt / (CMP_FILTER_TAU + self.dt);
        self.cmp_filt += (raw - self.cmp_filt) * alpha;
        self.cmp_filt
    }

    fn arm_commands(&self, phase_cycle: f64) -> ([f64; 3], [f64; 3]) {
        if let Some(script) = self.settings.arm_script {
            let q = script.amplitude * (std::f64::consts::TAU * script.frequency * self.time).sin();
            ([q, 0.0, 0.0], [q, 0.0, 0.0])
        } else if self.settings.stepping {
            let s = (std::f64::consts::TAU * phase_cycle).sin() * self.settings.arm_swing_amplitude;
            ([s, 0.0, 0.0], [-s, 0.0, 0.0])
        } else {
            ([0.0; 3], [0.0; 3])
        }
    }

    pub fn tick(&mut self, sensors: &SensorSample) -> ControllerOutput {
        self.time = sensors.timestamp;
        let est = self.estimator.update(sensors).expect("estimator update");

        if self.settings.stepping {
            self.tick_walking(sensors, est)
        } else {
            self.tick_stance(sensors, est)
        }
    }

    fn tick_stance(&mut self, sensors: &SensorSample, est: EstimateFrame) -> ControllerOutput {
        let (left, right) = self.stance_feet;
        let com_ref = Vector3::new(
            self.settings.stance_com.x,
            self.settings.stance_com.y,
            self.com_height,
        );
        let cmp = self.filter_cmp(compute_cmp(est.state.com, est.state.com_acceleration, 9.81).xy());
        let cmd_vel = self.com_ctl.update(
            com_ref.xy(),
            Vector2::zeros(),
            com_ref.xy(),
            est.state.com.xy(),
            cmp,
            est.state.valid && !est.gyro_saturated,
            &self.gains,
            self.dt,
        );
        let _ = cmd_vel;
        let com_cmd = com_ref.xy() + self.com_ctl.offset();
        let tilt = self.tilt_filter.update(&sensors.torso_orientation, self.dt, &self.gains);
        let (la, ra) = self.arm_commands(0.0);
        let commands = self.solve_commands(
            Vector3::new(com_cmd.x, com_cmd.y, self.com_height),
            left,
            right,
            la,
            ra,
        );
        self.last_commands = commands;
        ControllerOutput {
            commands,
            estimate: est,
            com_ref,
            com_command: com_cmd,
            cop_ref: com_ref.xy(),
            phase: 0.0,
            support_ref: Side::Right,
            cmp,
            tilt,
            channels: self.ff.channels_at(0.0),
            step_offset: Vector2::zeros(),
            ctl_offset: self.com_ctl.offset(),
            tx_com_ref: com_ref.xy(),
            swing_ref_z: 0.0,
            tx_extrapolated: false,
            world_shift: self.shift,
        }
    }

    fn tick_walking(&mut self, sensors: &SensorSample, est: EstimateFrame) -> ControllerOutput {
        let cfg = self.gait.config().clone();
        let omega = cfg.omega();
        let f_g = cfg.gait_frequency;
        let step_t = cfg.step_duration();

        self.gait.set_velocity(self.settings.velocity, 0.0);
        let frame = self.gait.tick();

        // The estimator flips support once the lifting foot clears its height
        // threshold; the commanded crossing of that same threshold is the
        // expected event time for the latency channel. Events before the
        // estimator has settled would pair with unrelated flips.
        if self.prev_swing_ref_z < self.lift_threshold
            && frame.swing_pose.z >= self.lift_threshold
            && self.time > 0.2
        {
            self.expected_touchdowns.push_back(self.time);
        }
        self.prev_swing_ref_z = frame.swing_pose.z;

        // Observed touchdowns re-base the reference world onto the actual
        // landing and feed the latency channel.
        if est.support_changed {
            self.fb_freeze_until = self.time + 0.04;
            let est_foot = match est.support {
                Side::Left => est.left_foot_world,
                Side::Right => est.right_foot_world,
            };
            // Re-base only when the observed support agrees with the plan;
            // a transient disagreement would pair the wrong footholds.
            if est.support == frame.support {
                let shift = frame.support_foothold.position - est_foot.xy();
                self.shift_step = shift - self.shift;
                self.shift = shift;
            }
            // An expected event from more than half a step ago belongs to an
            // exchange the estimator never reported; pairing it with this
            // flip would fabricate an enormous latency.
            while let Some(&front) = self.expected_touchdowns.front() {
                if self.time - front > 0.5 * step_t {
                    self.expected_touchdowns.pop_front();
                    self.ff.observe_latency(front, None, step_t, self.settings.velocity.x);
                } else {
                    break;
                }
            }
            if let Some(expected) = self.expected_touchdowns.pop_front() {
                self.ff.observe_latency(
                    expected,
                    Some(self.time),
                    step_t,
                    self.settings.velocity.x,
                );
            }
        }
        while let Some(&front) = self.expected_touchdowns.front() {
            if self.time - front > 0.5 * step_t {
                self.expected_touchdowns.pop_front();
                let missed = self.ff.observe_latency(front, None, step_t, self.settings.velocity.x);
                debug_assert_eq!(missed, LatencySample::Missed);
            } else {
                break;
            }
        }

        // Estimate mapped into the reference world. The filters need a short
        // settling window before their outputs are trustworthy.
        let est_com = est.state.com.xy() + self.shift;
        let est_vel = est.state.com_velocity.xy();
        let valid = est.state.valid && !est.gyro_saturated && self.time > 0.2;
        let fb_valid = valid && self.time >= self.fb_freeze_until;

        // CoM-ZMP feedback on the filtered CMP; during the exchange hold-off
        // the filter keeps its last value instead of ingesting the spike.
        let cmp = if self.time >= self.fb_freeze_until {
            let raw =
                compute_cmp(est.state.com, est.state.com_acceleration, 9.81).xy() + self.shift;
            self.filter_cmp(raw)
        } else {
            self.cmp_filt
        };
        self.com_ctl.update(
            frame.com_ref.xy(),
            frame.com_vel_ref.xy(),
            frame.cop_ref,
            est_com,
            cmp,
            fb_valid,
            &self.gains,
            self.dt,
        );

        // EOS-predictive step feedback; errors are measured minus reference
        // so the foothold moves toward where the robot actually is.
        let e_c = est_com - frame.com_ref.xy();
        let mut step_offset = Vector2::zeros();
        if self.settings.step_feedback && fb_valid {
            let ref_state = LipmState {
                position: frame.com_ref.xy(),
                velocity: frame.com_vel_ref.xy(),
                cop: frame.cop_ref,
            };
            let est_state = LipmState { position: est_com, velocity: est_vel, cop: frame.cop_ref };
            let horizon = (1.0 - frame.phase) / f_g;
            let ref_eos = lipm_propagate(&ref_state, horizon, omega);
            let est_eos = eos_predict(&est_state, frame.phase, f_g, omega);
            let e_eos = est_eos.position - ref_eos.position;
            let (corrected, _clamped) = step_feedback(
                frame.planned_next.position,
                e_c,
                e_eos,
                frame.phase,
                frame.support_foothold.position,
                cfg.max_stride,
            );
            step_offset = corrected - frame.planned_next.position;
            self.gait.set_step_offset(step_offset);
        }

        // Feedforward sampling: accumulate the side-unified rx/sp quantities
        // every valid tick and feed the step mean at each exchange. Positions
        // accumulate through the whole step — skipping the exchange window
        // would bias the mean by always dropping the same phase segment.
        if valid {
            let sup_side = frame.support;
            let sw_side = sup_side.opposite();
            let est_sup_foot = match sup_side {
                Side::Left => est.left_foot_world,
                Side::Right => est.right_foot_world,
            };
            let est_sw_foot = match sw_side {
                Side::Left => est.left_foot_world,
                Side::Right => est.right_foot_world,
            };
            let sup_hold = Vector3::new(
                frame.support_foothold.position.x,
                frame.support_foothold.position.y,
                0.0,
            );
            let a = &mut self.ff_acc;
            a.rx_sup += mirror_lateral(est.state.com - est_sup_foot, sup_side);
            a.rx_sw += mirror_lateral(est.state.com - est_sw_foot, sw_side);
            a.sp_sup += mirror_lateral(frame.com_ref - sup_hold, sup_side);
            a.sp_sw += mirror_lateral(frame.com_ref - frame.swing_pose, sw_side);
            a.n += 1;
            // The differentiated estimates spike through the anchor swap, so
            // the velocity mean only ingests settled ticks.
            if fb_valid && est.support == frame.support {
                a.rx_vel += mirror_lateral(est.state.com_velocity, sup_side);
                a.sp_vel += mirror_lateral(frame.com_vel_ref, sup_side);
                a.n_vel += 1;
            }
        }
        if frame.exchange {
            // Require most of the step to have been sampled so a half-settled
            // window does not masquerade as a step mean.
            if self.ff_acc.n as f64 * self.dt >= 0.5 * step_t && self.ff_acc.n_vel > 0 {
                let inv = 1.0 / self.ff_acc.n as f64;
                let inv_vel = 1.0 / self.ff_acc.n_vel as f64;
                let a = self.ff_acc;
                let rx = ModelSnapshot {
                    timestamp: self.time,
                    com_to_support: a.rx_sup * inv,
                    com_to_swing: a.rx_sw * inv,
                    com_velocity: a.rx_vel * inv_vel,
                    swing_orientation: Vector2::zeros(),
                    inertia_angles: Vector3::zeros(),
                    support: frame.support,
                };
                let sp = ModelSnapshot {
                    timestamp: self.time,
                    com_to_support: a.sp_sup * inv,
                    com_to_swing: a.sp_sw * inv,
                    com_velocity: a.sp_vel * inv_vel,
                    swing_orientation: Vector2::zeros(),
                    inertia_angles: Vector3::zeros(),
                    support: frame.support,
                };
                self.ff.observe_offsets(&rx, &sp, self.shift_step.x, self.settings.velocity.x, step_t);
            }
            self.ff_acc = FfAccumulator::default();
        }
        self.prev_phase = frame.phase;

        // Latency-forwarded tx with channel offsets.
        let channels = self.ff.channels_at(self.settings.velocity.x);
        // Forwarding by more than half a step would skip reference structure
        // no plausible actuation latency justifies.
        let horizon = channels.latency.clamp(0.0, 0.5 * step_t);
        let (sp_fwd, extrapolated) = self.gait.preview(horizon);
        let tx = apply_to_tx(&sp_fwd, Vector3::zeros(), &channels, f_g, extrapolated);

        // Tilt-compensated swing placement.
        let tilt = self.tilt_filter.update(&sensors.torso_orientation, self.dt, &self.gains);
        let com_cmd = tx.com_ref.xy() + self.com_ctl.offset();
        let mut swing_foot = tx.swing_foot;
        if self.settings.tilt_feedback {
            swing_foot = tilt_swing_transform(
                swing_foot,
                Vector3::new(com_cmd.x, com_cmd.y, 0.0),
                &tilt,
            );
        }

        let (sup_foot_cmd, sw_side) = (tx.support_foot, frame.support.opposite());
        let (left_foot, right_foot) = match sw_side {
            Side::Left => (swing_foot, sup_foot_cmd),
            Side::Right => (sup_foot_cmd, swing_foot),
        };

        // Arm counter-swing over the two-step cycle.
        let cycle = match frame.support {
            Side::Right => frame.phase / 2.0,
            Side::Left => 0.5 + frame.phase / 2.0,
        };
        let (la, ra) = self.arm_commands(cycle);

        let commands = self.solve_commands(
            Vector3::new(com_cmd.x, com_cmd.y, self.com_height),
            left_foot,
            right_foot,
            la,
            ra,
        );
        self.last_commands = commands;

        ControllerOutput {
            commands,
            estimate: est,
            com_ref: frame.com_ref,
            com_command: com_cmd,
            cop_ref: frame.cop_ref,
            phase: frame.phase,
            support_ref: frame.support,
            cmp,
            tilt,
            channels,
            step_offset,
            ctl_offset: self.com_ctl.offset(),
            tx_com_ref: tx.com_ref.xy(),
            swing_ref_z: swing_foot.z,
            tx_extrapolated: extrapolated,
            world_shift: self.shift,
        }
    }
}
