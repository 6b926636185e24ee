//! Steady-state centroidal compensation through the rx/sp/tx triple-model
//! scheme: measured (rx) quantities are compared against setpoints (sp), the
//! errors integrate through LPF-integrators, and the corrections plus a
//! latency time-forwarding are applied to the transmitted (tx) commands.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::five_mass::Side;
use crate::gait::GaitFrame;

/// Maximum plausible latency estimate (s).
pub const MAX_LATENCY: f64 = 0.5;
/// Workspace bound for the positional offset channels (m).
pub const OFFSET_BOUND: f64 = 0.15;
/// Bound for the foot-height channels (m); vertical offsets interfere with
/// ground contact far sooner than lateral ones interfere with reach.
pub const HEIGHT_BOUND: f64 = 0.005;

/// Low-pass filter wrapped in feedback so its state accumulates and holds the
/// steady-state compensation; the state freezes exactly while disabled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LpfIntegrator {
    pub value: f64,
    pub time_constant: f64,
    pub enabled: bool,
}

impl LpfIntegrator {
    pub fn new(time_constant: f64) -> Self {
        Self { value: 0.0, time_constant, enabled: false }
    }
}

/// One integrator tick: the error accumulates with gain dt/T_f while enabled.
pub fn lpf_update(filter: &mut LpfIntegrator, error: f64, dt: f64) {
    if filter.enabled && dt > 0.0 {
        filter.value += (dt / filter.time_constant) * error;
    }
}

/// Mirror the lateral components of a quantity so left and right samples feed
/// one unified channel: y flips with the leg sign, x and z are untouched.
pub fn mirror_lateral(v: Vector3<f64>, side: Side) -> Vector3<f64> {
    Vector3::new(v.x, v.y * side.sign(), v.z)
}

/// Same unification for a roll angle.
pub fn mirror_roll(roll: f64, side: Side) -> f64 {
    roll * side.sign()
}

/// Settled compensation values of all feedforward channels, side-unified
/// (right-leg sign convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FfChannelSet {
    /// Support-foot x/y offset r^c_sup (m).
    pub support_offset: Vector2<f64>,
    /// Swing-foot x/y offset r^c_sw (m).
    pub swing_offset: Vector2<f64>,
    pub support_height: f64,
    pub swing_height: f64,
    /// Sagittal velocity bias v_x (m/s).
    pub velocity_bias: f64,
    pub swing_roll: f64,
    pub swing_pitch: f64,
    /// Estimated sensorimotor latency t_l (s).
    pub latency: f64,
    /// Gains applied to the set inertia angles.
    pub inertia_gains: Vector3<f64>,
}

impl FfChannelSet {
    /// Clamp offsets and latency to their bounds; returns whether anything
    /// was clamped.
    pub fn clamp(&mut self) -> bool {
        let mut clamped = false;
        let mut limit = |v: &mut f64, bound: f64| {
            if v.abs() > bound {
                *v = v.clamp(-bound, bound);
                clamped = true;
            }
        };
        limit(&mut self.support_offset.x, OFFSET_BOUND);
        limit(&mut self.support_offset.y, OFFSET_BOUND);
        limit(&mut self.swing_offset.x, OFFSET_BOUND);
        limit(&mut self.swing_offset.y, OFFSET_BOUND);
        limit(&mut self.support_height, HEIGHT_BOUND);
        limit(&mut self.swing_height, HEIGHT_BOUND);
        limit(&mut self.latency, MAX_LATENCY);
        clamped
    }

    /// Linear interpolation toward `other` by `alpha` in [0, 1].
    pub fn lerp(&self, other: &FfChannelSet, alpha: f64) -> FfChannelSet {
        let a = alpha.clamp(0.0, 1.0);
        FfChannelSet {
            support_offset: self.support_offset + (other.support_offset - self.support_offset) * a,
            swing_offset: self.swing_offset + (other.swing_offset - self.swing_offset) * a,
            support_height: self.support_height + (other.support_height - self.support_height) * a,
            swing_height: self.swing_height + (other.swing_height - self.swing_height) * a,
            velocity_bias: self.velocity_bias + (other.velocity_bias - self.velocity_bias) * a,
            swing_roll: self.swing_roll + (other.swing_roll - self.swing_roll) * a,
            swing_pitch: self.swing_pitch + (other.swing_pitch - self.swing_pitch) * a,
            latency: self.latency + (other.latency - self.latency) * a,
            inertia_gains: self.inertia_gains + (other.inertia_gains - self.inertia_gains) * a,
        }
    }
}

/// Tracked centroidal quantities of one model snapshot (rx, sp or tx).
#[derive(Debug, Clone, Copy)]
pub struct ModelSnapshot {
    pub timestamp: f64,
    /// CoM-to-support-foot vector (world).
    pub com_to_support: Vector3<f64>,
    /// CoM-to-swing-foot vector (world).
    pub com_to_swing: Vector3<f64>,
    pub com_velocity: Vector3<f64>,
    /// Swing foot roll/pitch.
    pub swing_orientation: Vector2<f64>,
    pub inertia_angles: Vector3<f64>,
    pub support: Side,
}

impl Default for ModelSnapshot {
    fn default() -> Self {
        Self {
            timestamp: 0.0,
            com_to_support: Vector3::zeros(),
            com_to_swing: Vector3::zeros(),
            com_velocity: Vector3::zeros(),
            swing_orientation: Vector2::zeros(),
            inertia_angles: Vector3::zeros(),
            support: Side::Right,
        }
    }
}

/// The rx/sp/tx triple sharing one timestamp.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelTriple {
    pub rx: ModelSnapshot,
    pub sp: ModelSnapshot,
    pub tx: ModelSnapshot,
}

/// Eq-style composition of the constant and velocity offsets into the
/// per-foot feedforward terms.
///
/// r^v sweeps linearly through the step, vanishing at mid-stance; the swing
/// term carries the support offset since the swing foot rides on the support.
pub fn compose_offsets(
    channels: &FfChannelSet,
    phase: f64,
    gait_frequency: f64,
) -> (Vector2<f64>, Vector2<f64>) {
    let r_v = Vector2::new((phase - 0.5) / gait_frequency * channels.velocity_bias, 0.0);
    let sup = channels.support_offset - r_v;
    let sw = channels.swing_offset + channels.support_offset + r_v;
    (sup, sw)
}

/// Tx commands after feedforward application.
#[derive(Debug, Clone, Copy)]
pub struct TxCommands {
    pub com_ref: Vector3<f64>,
    pub com_vel_ref: Vector3<f64>,
    pub support_foot: Vector3<f64>,
    pub support_yaw: f64,
    pub swing_foot: Vector3<f64>,
    pub swing_roll: f64,
    pub swing_pitch: f64,
    pub swing_yaw: f64,
    pub inertia_angles: Vector3<f64>,
    /// True when the sp trajectory had to be extrapolated past the planned
    /// horizon for latency forwarding.
    pub extrapolated: bool,
}

/// Apply the channel corrections to a (latency-forwarded) sp frame,
/// resolving the unified lateral channels by the actual foot sides.
pub fn apply_to_tx(
    sp: &GaitFrame,
    sp_inertia_angles: Vector3<f64>,
    channels: &FfChannelSet,
    gait_frequency: f64,
    extrapolated: bool,
) -> TxCommands {
    let (ff_sup, ff_sw) = compose_offsets(channels, sp.phase, gait_frequency);
    let sup_side = sp.support;
    let sw_side = sup_side.opposite();

    let support_foot = Vector3::new(
        sp.support_foothold.position.x + ff_sup.x,
        sp.support_foothold.position.y + ff_sup.y * sup_side.sign(),
        channels.support_height,
    );
    let swing_foot = sp.swing_pose
        + Vector3::new(ff_sw.x, ff_sw.y * sw_side.sign(), channels.swing_height);

    TxCommands {
        com_ref: sp.com_ref,
        com_vel_ref: sp.com_vel_ref,
        support_foot,
        support_yaw: sp.support_foothold.yaw,
        swing_foot,
        swing_roll: mirror_roll(channels.swing_roll, sw_side),
        swing_pitch: channels.swing_pitch,
        swing_yaw: sp.swing_yaw,
        inertia_angles: sp_inertia_angles.component_mul(&channels.inertia_gains),
        extrapolated,
    }
}

/// One anchor's worth of LPF-integrators, one per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFilters {
    pub support_offset: [LpfIntegrator; 2],
    pub swing_offset: [LpfIntegrator; 2],
    pub support_height: LpfIntegrator,
    pub swing_height: LpfIntegrator,
    pub velocity_bias: LpfIntegrator,
    pub swing_roll: LpfIntegrator,
    pub swing_pitch: LpfIntegrator,
    pub latency: LpfIntegrator,
    pub inertia_gains: [LpfIntegrator; 3],
}

impl ChannelFilters {
    pub fn new(time_constant: f64) -> Self {
        let f = LpfIntegrator::new(time_constant);
        let mut filters = Self {
            support_offset: [f; 2],
            swing_offset: [f; 2],
            support_height: f,
            swing_height: f,
            velocity_bias: f,
            swing_roll: f,
            swing_pitch: f,
            latency: f,
            inertia_gains: [f; 3],
        };
        // Gains hold 1.0 at rest.
        for g in &mut filters.inertia_gains {
            g.value = 1.0;
        }
        filters
    }

    pub fn set_enabled(&mut self, enabled: bool) {
        for f in self.all_mut() {
            f.enabled = enabled;
        }
    }

    pub fn load(&mut self, set: &FfChannelSet) {
        self.support_offset[0].value = set.support_offset.x;
        self.support_offset[1].value = set.support_offset.y;
        self.swing_offset[0].value = set.swing_offset.x;
        self.swing_offset[1].value = set.swing_offset.y;
        self.support_height.value = set.support_height;
        self.swing_height.value = set.swing_height;
        self.velocity_bias.value = set.velocity_bias;
        self.swing_roll.value = set.swing_roll;
        self.swing_pitch.value = set.swing_pitch;
        self.latency.value = set.latency;
        for i in 0..3 {
            self.inertia_gains[i].value = set.inertia_gains[i];
        }
    }

    fn all_mut(&mut self) -> [&mut LpfIntegrator; 13] {
        let Self {
            support_offset: [s0, s1],
            swing_offset: [w0, w1],
            support_height,
            swing_height,
            velocity_bias,
            swing_roll,
            swing_pitch,
            latency,
            inertia_gains: [g0, g1, g2],
        } = self;
        [s0, s1, w0, w1, support_height, swing_height, velocity_bias, swing_roll, swing_pitch, latency, g0, g1, g2]
    }

    pub fn to_set(&self) -> (FfChannelSet, bool) {
        let mut set = FfChannelSet {
            support_offset: Vector2::new(self.support_offset[0].value, self.support_offset[1].value),
            swing_offset: Vector2::new(self.swing_offset[0].value, self.swing_offset[1].value),
            support_height: self.support_height.value,
            swing_height: self.swing_height.value,
            velocity_bias: self.velocity_bias.value,
            swing_roll: self.swing_roll.value,
            swing_pitch: self.swing_pitch.value,
            latency: self.latency.value,
            inertia_gains: Vector3::new(
                self.inertia_gains[0].value,
                self.inertia_gains[1].value,
                self.inertia_gains[2].value,
            ),
        };
        let clamped = set.clamp();
        (set, clamped)
    }
}

/// Persisted calibration: the two anchor channel sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FfCalibration {
    pub zero_velocity: FfChannelSet,
    pub nominal_velocity_set: FfChannelSet,
    /// Forward velocity at which the nominal anchor was estimated (m/s).
    pub nominal_velocity: f64,
}

/// Configuration of the feedforward bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedforwardConfig {
    /// LPF time constant (s); several step periods.
    pub time_constant: f64,
    /// Forward velocity of the nonzero-velocity anchor (m/s).
    pub nominal_velocity: f64,
}

impl Default for FeedforwardConfig {
    fn default() -> Self {
        Self { time_constant: 2.0, nominal_velocity: 0.2 }
    }
}

/// Result of a latency observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencySample {
    Accepted,
    /// No exchange observed within 1.5 step periods of the expected one.
    Missed,
}

/// The rx/sp/tx feedforward bank: two channel-filter anchors plus latency
/// bookkeeping, owned and ticked by the control loop.
#[derive(Debug, Clone)]
pub struct FeedforwardBank {
    pub cfg: FeedforwardConfig,
    zero: ChannelFilters,
    nominal: ChannelFilters,
    enabled: bool,
}

impl FeedforwardBank {
    pub fn new(cfg: FeedforwardConfig) -> Self {
        let zero = ChannelFilters::new(cfg.time_constant);
        let nominal = ChannelFilters::new(cfg.time_constant);
        Self { cfg, zero, nominal, enabled: false }
    }

    pub fn set_enabled(&mut self, enabled: bool) {
        self.enabled = enabled;
        self.zero.set_enabled(enabled);
        self.nominal.set_enabled(enabled);
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn load_calibration(&mut self, cal: &FfCalibration) {
        self.zero.load(&cal.zero_velocity);
        self.nominal.load(&cal.nominal_velocity_set);
        self.cfg.nominal_velocity = cal.nominal_velocity;
    }

    pub fn calibration(&self) -> FfCalibration {
        FfCalibration {
            zero_velocity: self.zero.to_set().0,
            nominal_velocity_set: self.nominal.to_set().0,
            nominal_velocity: self.cfg.nominal_velocity,
        }
    }

    /// Interpolated channel set for the commanded forward velocity.
    pub fn channels_at(&self, forward_velocity: f64) -> FfChannelSet {
        let alpha = (forward_velocity.abs() / self.cfg.nominal_velocity).clamp(0.0, 1.0);
        self.zero.to_set().0.lerp(&self.nominal.to_set().0, alpha)
    }

    fn anchor_mut(&mut self, forward_velocity: f64) -> &mut ChannelFilters {
        if forward_velocity.abs() >= 0.5 * self.cfg.nominal_velocity {
            &mut self.nominal
        } else {
            &mut self.zero
        }
    }

    /// Weight of the odometry-visible per-step drift folded into the sagittal
    /// support-offset residual. The com-to-support mean and the per-exchange
    /// foothold mismatch are two partial views of the same unobservable world
    /// drift, with equilibria on opposite sides of its null; this blend puts
    /// the combined equilibrium on the drift null itself.
    pub const DRIFT_BLEND: f64 = -0.75;

    /// Feed one step-mean sample of the positional channels.
    ///
    /// `rx` and `sp` are side-unified snapshots averaged over the step;
    /// `sample_dt` is the wall time covered by the sample (the step period).
    pub fn observe_offsets(
        &mut self,
        rx: &ModelSnapshot,
        sp: &ModelSnapshot,
        step_drift_x: f64,
        forward_velocity: f64,
        sample_dt: f64,
    ) {
        // The foothold-mismatch drift term only reads cleanly at zero
        // commanded velocity; while striding, odometry scale error dwarfs it.
        let drift_term = if forward_velocity.abs() < 0.5 * self.cfg.nominal_velocity {
            Self::DRIFT_BLEND * step_drift_x
        } else {
            0.0
        };
        let filters = self.anchor_mut(forward_velocity);
        // Positional offsets are added onto the foot commands; shifting a
        // foot command pulls the CoM the opposite way relative to that foot,
        // so accumulating rx - sp closes the loop negatively and each channel
        // settles first-order. The velocity channel acts through foothold
        // lead instead, which flips its loop sign: it accumulates sp - rx.
        let e_sup = rx.com_to_support - sp.com_to_support;
        let e_sw = rx.com_to_swing - sp.com_to_swing;
        lpf_update(
            &mut filters.support_offset[0],
            e_sup.x + drift_term,
            sample_dt,
        );
        lpf_update(&mut filters.support_offset[1], e_sup.y, sample_dt);
        lpf_update(&mut filters.swing_offset[0], e_sw.x - e_sup.x, sample_dt);
        lpf_update(&mut filters.swing_offset[1], e_sw.y - e_sup.y, sample_dt);
        lpf_update(&mut filters.support_height, e_sup.z, sample_dt);
        lpf_update(&mut filters.swing_height, e_sw.z - e_sup.z, sample_dt);
        lpf_update(
            &mut filters.velocity_bias,
            sp.com_velocity.x - rx.com_velocity.x,
            sample_dt,
        );
        let e_orient = rx.swing_orientation - sp.swing_orientation;
        lpf_update(&mut filters.swing_roll, -e_orient.x, sample_dt);
        lpf_update(&mut filters.swing_pitch, -e_orient.y, sample_dt);
        for i in 0..3 {
            let set = sp.inertia_angles[i];
            if set.abs() > 1e-3 {
                // Scale the gain toward reproducing the set angle.
                let ratio_err = (set - rx.inertia_angles[i]) / set;
                lpf_update(&mut filters.inertia_gains[i], ratio_err, sample_dt);
            }
        }
    }

    /// Feed one per-step latency observation.
    pub fn observe_latency(
        &mut self,
        expected_exchange: f64,
        observed_exchange: Option<f64>,
        step_duration: f64,
        forward_velocity: f64,
    ) -> LatencySample {
        let observed = match observed_exchange {
            Some(t) if (t - expected_exchange).abs() <= 1.5 * step_duration => t,
            _ => {
                return LatencySample::Missed;
            }
        };
        let filters = self.anchor_mut(forward_velocity);
        lpf_update(&mut filters.latency, observed - expected_exchange, step_duration);
        LatencySample::Accepted
    }
}
