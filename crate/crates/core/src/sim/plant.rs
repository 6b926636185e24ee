//! Reduced-dynamics plant: a position-controlled five-mass robot anchored at
//! the support foot. The pose is kinematic while the required CoP stays
//! inside the support polygon; beyond it the robot pivots rigidly about the
//! foot edge. Commands pass through latency, backlash, and lag actuators.

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{NoiseConfig, PlantConfig, PushConfig};
use crate::estimation::SensorSample;
use crate::five_mass::{
    compute_state, limb_end_torso, FiveMassConfig, JointState, LimbJoints, Side, TorsoPose,
};

use super::actuator::ActuatorChannel;

/// Hip-pitch rate limits of the asymmetric-reachability plant: forward
/// reaching (negative pitch) moves thigh and shank mass and is slow,
/// backward mostly shank and is fast.
const ASYM_RATE_FORWARD: f64 = 2.5;
const ASYM_RATE_BACKWARD: f64 = 9.0;

/// Tilt relaxation stiffness/damping once the foot is flat again.
const TILT_RELAX_KP: f64 = 600.0;
const TILT_RELAX_KD: f64 = 50.0;

/// Swing foot height below which ground contact can engage (m).
const CONTACT_HEIGHT: f64 = 0.005;
/// Time constant of the CoP filter driving the weight-transfer decision (s).
const COP_FILTER_TAU: f64 = 0.02;

/// A force applied to the torso center for a fixed window.
#[derive(Debug, Clone, Copy)]
pub struct PushEvent {
    pub start: f64,
    pub duration: f64,
    pub force: Vector3<f64>,
}

impl From<&PushConfig> for PushEvent {
    fn from(c: &PushConfig) -> Self {
        Self {
            start: c.start,
            duration: c.duration,
            force: Vector3::new(c.force[0], c.force[1], c.force[2]),
        }
    }
}

/// Joint position commands for all four limbs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointCommands {
    pub left_leg: [f64; 3],
    pub right_leg: [f64; 3],
    pub left_arm: [f64; 3],
    pub right_arm: [f64; 3],
}

impl JointCommands {
    pub fn limbs(&self) -> [[f64; 3]; 4] {
        [self.left_leg, self.right_leg, self.left_arm, self.right_arm]
    }
}

/// Ground-truth channels emitted every plant step.
#[derive(Debug, Clone)]
pub struct TruthSample {
    pub time: f64,
    pub com: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    pub com_acceleration: Vector3<f64>,
    pub torso_position: Vector3<f64>,
    pub torso_mass_acceleration: Vector3<f64>,
    pub left_foot: Vector3<f64>,
    pub right_foot: Vector3<f64>,
    pub support: Side,
    pub exchanged: bool,
    pub tilt: f64,
    pub pivoting: bool,
    pub cop: Vector2<f64>,
    pub cop_saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantOutcome {
    Nominal,
    Fallen,
}

/// Full plant state snapshot (pose plus contact/tilt mode).
#[derive(Debug, Clone)]
pub struct PlantState {
    pub joints: JointState,
    pub torso: TorsoPose,
    pub support: Side,
    pub support_foot: Vector2<f64>,
    pub tilt: f64,
    pub tilt_rate: f64,
    pub pivoting: bool,
}

struct LimbChannels(Vec<ActuatorChannel>);

impl LimbChannels {
    fn joints(&self) -> LimbJoints {
        LimbJoints {
            q: self.0.iter().map(|c| c.position()).collect(),
            qd: self.0.iter().map(|c| c.velocity()).collect(),
        }
    }
}

pub struct Plant {
    robot: FiveMassConfig,
    cfg: PlantConfig,
    time: f64,
    support: Side,
    support_foot: Vector2<f64>,
    tilt: f64,
    tilt_rate: f64,
    prev_tilt_rate: f64,
    pivoting: bool,
    /// Pivot edge x offset from the foot center while pivoting.
    pivot_dx: f64,
    channels: [LimbChannels; 4],
    /// Low-pass filtered required CoP, for the weight-transfer decision.
    cop_filt: Vector2<f64>,
    pushes: Vec<PushEvent>,
    /// Last three CoM / torso-mass world positions for finite differences.
    com_hist: Vec<Vector3<f64>>,
    torso_hist: Vec<Vector3<f64>>,
    last_exchange: f64,
    prev_swing_z: f64,
    nominal_height: f64,
    fallen: bool,
}

impl Plant {
    /// Build the plant at rest with the given initial joint commands applied
    /// exactly and the support foot pinned at `support_foot` (z = 0).
    pub fn new(
        robot: FiveMassConfig,
        cfg: PlantConfig,
        support: Side,
        support_foot: Vector2<f64>,
        initial: &JointCommands,
    ) -> Self {
        let dt = cfg.period;
        let limbs = initial.limbs();
        let channels = std::array::from_fn::<_, 4, _>(|i| {
            LimbChannels(
                limbs[i]
                    .iter()
                    .map(|&q0| ActuatorChannel::new(cfg.actuator.clone(), dt, q0))
                    .collect(),
            )
        });
        let mut plant = Self {
            robot,
            cfg,
            time: 0.0,
            support,
            support_foot,
            tilt: 0.0,
            tilt_rate: 0.0,
            prev_tilt_rate: 0.0,
            pivoting: false,
            pivot_dx: 0.0,
            channels,
            cop_filt: support_foot,
            pushes: Vec::new(),
            com_hist: Vec::new(),
            torso_hist: Vec::new(),
            last_exchange: 0.0,
            prev_swing_z: 0.0,
            nominal_height: 0.0,
            fallen: false,
        };
        let (_, state, _, _) = plant.pose();
        plant.nominal_height = state.com.z;
        plant
    }

    pub fn schedule_push(&mut self, push: PushEvent) {
        self.pushes.push(push);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn support(&self) -> Side {
        self.support
    }

    pub fn outcome(&self) -> PlantOutcome {
        if self.fallen {
            PlantOutcome::Fallen
        } else {
            PlantOutcome::Nominal
        }
    }

    pub fn state(&self) -> PlantState {
        let (torso, _, _, _) = self.pose();
        PlantState {
            joints: self.joint_state(),
            torso,
            support: self.support,
            support_foot: self.support_foot,
            tilt: self.tilt,
            tilt_rate: self.tilt_rate,
            pivoting: self.pivoting,
        }
    }

    fn joint_state(&self) -> JointState {
        JointState {
            left_leg: self.channels[0].joints(),
            right_leg: self.channels[1].joints(),
            left_arm: self.channels[2].joints(),
            right_arm: self.channels[3].joints(),
        }
    }

    fn leg_config(&self, side: Side) -> &crate::five_mass::LimbConfig {
        match side {
            Side::Left => &self.robot.left_leg,
            Side::Right => &self.robot.right_leg,
        }
    }

    fn leg_joints<'a>(joints: &'a JointState, side: Side) -> &'a LimbJoints {
        match side {
            Side::Left => &joints.left_leg,
            Side::Right => &joints.right_leg,
        }
    }

    /// Current kinematic pose: torso, five-mass state, and both feet in
    /// world coordinates, including the rigid tilt about the pivot edge.
    fn pose(
        &self,
    ) -> (TorsoPose, crate::five_mass::FiveMassState, Vector3<f64>, Vector3<f64>) {
        let joints = self.joint_state();
        let foot_sup = limb_end_torso(
            &Self::leg_joints(&joints, self.support).q,
            self.leg_config(self.support),
        )
        .unwrap_or_else(|_| Vector3::new(0.0, 0.0, -0.7));
        let anchor = Vector3::new(self.support_foot.x, self.support_foot.y, 0.0);

        // Untilted torso position from the support-foot anchor, then a rigid
        // rotation about the foot edge.
        let t0 = anchor - foot_sup;
        let r_t = Rotation3::from_axis_angle(&Vector3::y_axis(), self.tilt);
        let pivot = anchor + Vector3::new(self.pivot_dx, 0.0, 0.0);
        let position = pivot + r_t * (t0 - pivot);
        let torso = TorsoPose { position, orientation: r_t };

        let state = compute_state(&self.robot, &joints, &torso).expect("valid plant pose");
        let foot = |side: Side| {
            let f = limb_end_torso(&Self::leg_joints(&joints, side).q, self.leg_config(side))
                .unwrap_or_else(|_| Vector3::new(0.0, 0.0, -0.7));
            position + r_t * f
        };
        (torso, state, foot(Side::Left), foot(Side::Right))
    }

    fn push_acceleration(&self) -> Vector3<f64> {
        let mut f = Vector3::zeros();
        for p in &self.pushes {
            if self.time >= p.start && self.time < p.start + p.duration {
                f += p.force;
            }
        }
        f / self.robot.total_weight()
    }

    /// Advance one plant period under the given joint commands.
    pub fn step(&mut self, commands: &JointCommands) -> TruthSample {
        let dt = self.cfg.period;
        // Previous gyro reading, before any contact event modifies the rate.
        self.prev_tilt_rate = self.tilt_rate;

        // Sag bias loads the support hip pitch; asymmetric reachability
        // limits hip pitch rates per direction.
        for (i, side) in [(0usize, Side::Left), (1, Side::Right)] {
            let hip_pitch = &mut self.channels[i].0[0];
            hip_pitch.bias = if side == self.support { self.cfg.sag_bias } else { 0.0 };
            if self.cfg.asymmetric_reachability {
                hip_pitch.set_rate_limits(ASYM_RATE_FORWARD, ASYM_RATE_BACKWARD);
            }
        }

        let cmd = commands.limbs();
        for i in 0..4 {
            for (j, ch) in self.channels[i].0.iter_mut().enumerate() {
                ch.step(cmd[i][j], dt);
            }
        }

        let (torso, state, left_foot, right_foot) = self.pose();
        let com = state.com;
        let torso_mass = state.masses[0];

        let swing_foot = match self.support {
            Side::Left => right_foot,
            Side::Right => left_foot,
        };

        // Finite-difference truth (backward differences over the pose
        // history; sensors use the same scheme so they stay consistent).
        self.com_hist.push(com);
        self.torso_hist.push(torso_mass);
        if self.com_hist.len() > 3 {
            self.com_hist.remove(0);
            self.torso_hist.remove(0);
        }
        let (com_vel, com_acc) = Self::differentiate(&self.com_hist, dt);
        let (_, torso_acc) = Self::differentiate(&self.torso_hist, dt);

        // Contact dynamics: required CoP from the pendulum inversion.
        let push_acc = self.push_acceleration();
        let h = com.z.max(0.1);
        let omega2 = self.robot.gravity_magnitude() / h;
        let cop_demand = Vector2::new(
            com.x - (com_acc.x - push_acc.x) / omega2,
            com.y - (com_acc.y - push_acc.y) / omega2,
        );
        let alpha = dt / (COP_FILTER_TAU + dt);
        self.cop_filt += (cop_demand - self.cop_filt) * alpha;

        // Support exchange when the swing foot can carry load: either it
        // strikes the ground geometrically (tilted or penetrating swing), or
        // the required CoP moves decisively past the midline toward a swing
        // foot hovering at ground level (weight transfer).
        // Tracking noise hovers within a fraction of a millimeter of the
        // ground during soft touchdown; a geometric strike needs real
        // penetration.
        let strikes = swing_foot.z <= -0.002 && swing_foot.z < self.prev_swing_z;
        let sep = swing_foot.xy() - self.support_foot;
        let transfers = swing_foot.z <= CONTACT_HEIGHT && sep.norm_squared() > 1e-6 && {
            let lam = (self.cop_filt - self.support_foot).dot(&sep) / sep.norm_squared();
            lam > 0.6
        };
        let mut exchanged = false;
        if (strikes || transfers) && self.time - self.last_exchange > 0.15 {
            self.support = self.support.opposite();
            self.support_foot = Vector2::new(swing_foot.x, swing_foot.y);
            self.last_exchange = self.time;
            exchanged = true;
            if self.pivoting {
                // The catching step arrests the rotation.
                self.pivoting = false;
                self.pivot_dx = 0.0;
                self.tilt_rate = 0.0;
            }
        }
        self.prev_swing_z = match self.support {
            Side::Left => right_foot.z,
            Side::Right => left_foot.z,
        };

        let x_min = self.support_foot.x - self.cfg.foot_extent.0;
        let x_max = self.support_foot.x + self.cfg.foot_extent.1;
        let y_min = self.support_foot.y - self.cfg.foot_half_width;
        let y_max = self.support_foot.y + self.cfg.foot_half_width;
        let cop = Vector2::new(cop_demand.x.clamp(x_min, x_max), cop_demand.y.clamp(y_min, y_max));
        let cop_saturated = cop_demand.x < x_min || cop_demand.x > x_max;

        if !self.pivoting && cop_saturated && !exchanged {
            self.pivoting = true;
            self.pivot_dx =
                if cop_demand.x > x_max { self.cfg.foot_extent.1 } else { -self.cfg.foot_extent.0 };
        }

        if self.pivoting {
            // Inverted pendulum about the foot edge.
            let pivot = Vector3::new(self.support_foot.x + self.pivot_dx, com.y, 0.0);
            let dx = com.x - pivot.x;
            let dz = com.z;
            let r2 = (dx * dx + dz * dz).max(1e-6);
            let g = self.robot.gravity_magnitude();
            let tilt_acc = (g * dx + push_acc.x * dz) / r2;
            self.tilt_rate += tilt_acc * dt;
            self.tilt += self.tilt_rate * dt;
            // Exit once the rotation has swung back through flat.
            if (self.pivot_dx > 0.0 && self.tilt <= 0.0)
                || (self.pivot_dx < 0.0 && self.tilt >= 0.0)
            {
                self.pivoting = false;
                self.pivot_dx = 0.0;
                self.tilt = 0.0;
                self.tilt_rate = 0.0;
            }
        } else if self.tilt.abs() > 1e-12 || self.tilt_rate.abs() > 1e-12 {
            // Flat-foot contact restores the attitude.
            let tilt_acc = -TILT_RELAX_KP * self.tilt - TILT_RELAX_KD * self.tilt_rate;
            self.tilt_rate += tilt_acc * dt;
            self.tilt += self.tilt_rate * dt;
            if self.tilt.abs() < 1e-6 && self.tilt_rate.abs() < 1e-4 {
                self.tilt = 0.0;
                self.tilt_rate = 0.0;
            }
        }

        if self.tilt.abs() > 60.0_f64.to_radians() || com.z < 0.3 * self.nominal_height {
            self.fallen = true;
        }

        self.time += dt;
        TruthSample {
            time: self.time,
            com,
            com_velocity: com_vel,
            com_acceleration: com_acc,
            torso_position: torso.position,
            torso_mass_acceleration: torso_acc,
            left_foot,
            right_foot,
            support: self.support,
            exchanged,
            tilt: self.tilt,
            pivoting: self.pivoting,
            cop,
            cop_saturated,
        }
    }

    fn differentiate(hist: &[Vector3<f64>], dt: f64) -> (Vector3<f64>, Vector3<f64>) {
        match hist.len() {
            0 | 1 => (Vector3::zeros(), Vector3::zeros()),
            2 => ((hist[1] - hist[0]) / dt, Vector3::zeros()),
            _ => {
                let n = hist.len();
                let vel = (hist[n - 1] - hist[n - 2]) / dt;
                let acc = (hist[n - 1] - hist[n - 2] * 2.0 + hist[n - 3]) / (dt * dt);
                (vel, acc)
            }
        }
    }

    /// Exact forward measurement model plus configured white noise.
    pub fn synthesize_sensors(&self, noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> SensorSample {
        let (torso, state, _, _) = self.pose();
        let (_, torso_acc) = Self::differentiate(&self.torso_hist, self.cfg.period);

        // Torso angular rate/acceleration about y in the torso frame.
        let gyro_true = Vector3::new(0.0, self.tilt_rate, 0.0);
        let ang_acc = Vector3::new(0.0, (self.tilt_rate - self.prev_tilt_rate) / self.cfg.period, 0.0);

        // Accelerometer: specific force at the mount, torso frame — the
        // exact inverse of the estimator-side measurement equations.
        let lever = self.robot.sensor_mount - self.robot.torso_com_offset;
        let accel_true =
            torso.orientation.inverse() * (torso_acc - self.robot.gravity) + ang_acc.cross(&lever);

        let mut gauss = || {
            // Box-Muller on the deterministic stream.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let accel = accel_true
            + Vector3::new(gauss(), gauss(), gauss()) * noise.accel_sigma;
        let gyro = gyro_true + Vector3::new(gauss(), gauss(), gauss()) * noise.gyro_sigma;

        let quantize = |j: &LimbJoints| LimbJoints {
            q: j.q
                .iter()
                .map(|&q| {
                    if noise.encoder_quantum > 0.0 {
                        (q / noise.encoder_quantum).round() * noise.encoder_quantum
                    } else {
                        q
                    }
                })
                .collect(),
            qd: j.qd.clone(),
        };
        let joints = self.joint_state();
        let _ = state;
        SensorSample {
            timestamp: self.time,
            accel,
            gyro,
            joints: JointState {
                left_leg: quantize(&joints.left_leg),
                right_leg: quantize(&joints.right_leg),
                left_arm: quantize(&joints.left_arm),
                right_arm: quantize(&joints.right_arm),
            },
            torso_orientation: torso.orientation,
        }
    }
}
