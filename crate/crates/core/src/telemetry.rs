//! CSV telemetry: trial logs, sweep summaries, calibration files, and the
//! replay reader.
//!
//! Every output starts with `#`-prefixed header lines embedding the tool
//! version, the seed, and a hash of the scenario config, so any file can be
//! traced back to the run that produced it. Writing is deterministic:
//! identical seed and config reproduce byte-identical files.

use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::feedforward::FfCalibration;
use crate::five_mass::Side;
use crate::sim::scenario::{ErrorStats, LogRow, SweepResult, TrialResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{row}: {message}")]
    Malformed { path: String, row: usize, message: String },
    #[error("{path}: truncated log (missing end marker); refusing partial data")]
    Truncated { path: String },
}

/// Short hex digest of the serialized scenario; embedded in output headers.
pub fn config_hash(scenario: &ScenarioConfig) -> String {
    let text = toml::to_string(scenario).unwrap_or_default();
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Provenance stamp written at the top of every output file.
#[derive(Debug, Clone)]
pub struct RunStamp {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl RunStamp {
    pub fn new(command: &str, scenario: &ScenarioConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: scenario.seed,
            config_hash: config_hash(scenario),
        }
    }

    fn write(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# centroidal {TOOL_VERSION}")?;
        writeln!(w, "# command {}", self.command)?;
        writeln!(w, "# seed {}", self.seed)?;
        writeln!(w, "# config_sha256 {}", self.config_hash)
    }
}

/// Column order of the per-tick trial log; fixed and part of the interface.
pub const LOG_COLUMNS: &[&str] = &[
    "time",
    "truth_com_x",
    "truth_com_y",
    "truth_com_z",
    "truth_vel_x",
    "truth_vel_y",
    "truth_vel_z",
    "truth_acc_x",
    "truth_acc_y",
    "truth_acc_z",
    "torso_acc_x",
    "torso_acc_y",
    "torso_acc_z",
    "est_com_x",
    "est_com_y",
    "est_com_z",
    "est_vel_x",
    "est_vel_y",
    "est_vel_z",
    "est_acc_x",
    "est_acc_y",
    "est_acc_z",
    "ref_com_x",
    "ref_com_y",
    "ref_com_z",
    "cop_ref_x",
    "cop_ref_y",
    "cmp_x",
    "cmp_y",
    "phase",
    "support",
    "exchanged",
    "tilt",
    "pivoting",
    "ff_latency",
    "ff_support_x",
    "step_offset_x",
    "world_shift_x",
    "left_foot_z",
    "right_foot_z",
    "com_cmd_x",
    "com_cmd_y",
    "ctl_offset_x",
    "ctl_offset_y",
    "tx_com_ref_x",
    "tx_com_ref_y",
    "swing_ref_z",
    "ff_swing_height",
    "ik_failures",
    "fallen",
    "accel_x",
    "accel_y",
    "accel_z",
    "gyro_x",
    "gyro_y",
    "gyro_z",
    "l_leg_q0",
    "l_leg_q1",
    "l_leg_q2",
    "l_leg_qd0",
    "l_leg_qd1",
    "l_leg_qd2",
    "r_leg_q0",
    "r_leg_q1",
    "r_leg_q2",
    "r_leg_qd0",
    "r_leg_qd1",
    "r_leg_qd2",
    "l_arm_q0",
    "l_arm_q1",
    "l_arm_q2",
    "l_arm_qd0",
    "l_arm_qd1",
    "l_arm_qd2",
    "r_arm_q0",
    "r_arm_q1",
    "r_arm_q2",
    "r_arm_qd0",
    "r_arm_qd1",
    "r_arm_qd2",
    "torso_roll",
    "torso_pitch",
    "torso_yaw",
];

fn side_tag(side: Side) -> &'static str {
    match side {
        Side::Left => "L",
        Side::Right => "R",
    }
}

fn row_fields(r: &LogRow) -> Vec<String> {
    let f = |v: f64| format!("{v}");
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    let mut fields = vec![
        f(r.time),
        f(r.truth_com.x),
        f(r.truth_com.y),
        f(r.truth_com.z),
        f(r.truth_com_vel.x),
        f(r.truth_com_vel.y),
        f(r.truth_com_vel.z),
        f(r.truth_com_acc.x),
        f(r.truth_com_acc.y),
        f(r.truth_com_acc.z),
        f(r.truth_torso_acc.x),
        f(r.truth_torso_acc.y),
        f(r.truth_torso_acc.z),
        f(r.est_com.x),
        f(r.est_com.y),
        f(r.est_com.z),
        f(r.est_com_vel.x),
        f(r.est_com_vel.y),
        f(r.est_com_vel.z),
        f(r.est_com_acc.x),
        f(r.est_com_acc.y),
        f(r.est_com_acc.z),
        f(r.ref_com.x),
        f(r.ref_com.y),
        f(r.ref_com.z),
        f(r.cop_ref.x),
        f(r.cop_ref.y),
        f(r.cmp.x),
        f(r.cmp.y),
        f(r.phase),
        side_tag(r.support).to_string(),
        b(r.exchanged),
        f(r.tilt),
        b(r.pivoting),
        f(r.ff_latency),
        f(r.ff_support_x),
        f(r.step_offset_x),
        f(r.world_shift_x),
        f(r.left_foot_z),
        f(r.right_foot_z),
        f(r.com_cmd.x),
        f(r.com_cmd.y),
        f(r.ctl_offset.x),
        f(r.ctl_offset.y),
        f(r.tx_com_ref.x),
        f(r.tx_com_ref.y),
        f(r.swing_ref_z),
        f(r.ff_swing_height),
        r.ik_failures.to_string(),
        b(r.fallen),
    ];
    let s = &r.sensors;
    for v in [s.accel, s.gyro] {
        fields.extend([f(v.x), f(v.y), f(v.z)]);
    }
    for limb in s.joints.limbs() {
        for k in 0..3 {
            fields.push(f(limb.q.get(k).copied().unwrap_or(0.0)));
        }
        for k in 0..3 {
            fields.push(f(limb.qd.get(k).copied().unwrap_or(0.0)));
        }
    }
    let (roll, pitch, yaw) = s.torso_orientation.euler_angles();
    fields.extend([f(roll), f(pitch), f(yaw)]);
    fields
}

/// Write the per-tick log CSV. Ends with a `# end rows N` marker so readers
/// can distinguish a complete log from a truncated one.
pub fn write_trial_log(
    w: &mut impl Write,
    stamp: &RunStamp,
    rows: &[LogRow],
) -> io::Result<()> {
    stamp.write(w)?;
    writeln!(w, "{}", LOG_COLUMNS.join(","))?;
    for r in rows {
        writeln!(w, "{}", row_fields(r).join(","))?;
    }
    writeln!(w, "# end rows {}", rows.len())
}

/// One-row trial summary CSV.
pub fn write_trial_summary(
    w: &mut impl Write,
    stamp: &RunStamp,
    result: &TrialResult,
) -> io::Result<()> {
    stamp.write(w)?;
    writeln!(
        w,
        "outcome,fell_at,steps,sagittal_drift,tracking_rms,ctl_tracking_rms"
    )?;
    writeln!(
        w,
        "{:?},{},{},{},{},{}",
        result.outcome,
        result.fell_at.map_or(String::new(), |t| format!("{t}")),
        result.steps,
        result.sagittal_drift,
        result.tracking_rms,
        result.ctl_tracking_rms,
    )
}

/// Push-sweep summary: one row per force level, recovered counts per
/// direction (forward/backward), trials per cell.
pub fn write_sweep_summary(
    w: &mut impl Write,
    stamp: &RunStamp,
    sweep: &SweepResult,
) -> io::Result<()> {
    stamp.write(w)?;
    writeln!(w, "force_n,forward_recovered,backward_recovered,trials")?;
    let mut forces: Vec<f64> = sweep.cells.iter().map(|c| c.force).collect();
    forces.sort_by(|a, b| a.partial_cmp(b).unwrap());
    forces.dedup();
    for force in forces {
        let trials = sweep
            .cells
            .iter()
            .find(|c| c.force == force)
            .map_or(0, |c| c.trials);
        writeln!(
            w,
            "{},{},{},{}",
            force,
            sweep.recovered_at(1.0, force),
            sweep.recovered_at(-1.0, force),
            trials,
        )?;
    }
    Ok(())
}

/// Estimation error statistics in the three-column report layout
/// (median, standard deviation, mean absolute), one row per series axis.
pub fn write_error_stats(
    w: &mut impl Write,
    stamp: &RunStamp,
    per_variant: &[(&str, [ErrorStats; 3], [ErrorStats; 3])],
) -> io::Result<()> {
    stamp.write(w)?;
    writeln!(w, "variant,series,axis,median,sd,mean_abs")?;
    let axes = ["x", "y", "z"];
    for (variant, vel, acc) in per_variant {
        for (series, stats) in [("com_vel", vel), ("com_acc", acc)] {
            for axis in 0..3 {
                let s = stats[axis];
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    variant, series, axes[axis], s.median, s.sd, s.mean_abs
                )?;
            }
        }
    }
    Ok(())
}

/// Persist a feedforward calibration as TOML with the provenance stamp as
/// leading comments (valid TOML comments, so the file reloads unchanged).
pub fn write_calibration(
    w: &mut impl Write,
    stamp: &RunStamp,
    cal: &FfCalibration,
) -> io::Result<()> {
    stamp.write(w)?;
    let body = toml::to_string(cal)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    w.write_all(body.as_bytes())
}

pub fn read_calibration(path: &Path) -> Result<FfCalibration, TelemetryError> {
    let text = std::fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| TelemetryError::Malformed {
        path: path.display().to_string(),
        row: 0,
        message: e.to_string(),
    })
}

/// Ground-truth and sensor slice of a replayed trial log.
#[derive(Debug, Clone)]
pub struct ReplayRow {
    pub time: f64,
    pub truth_com_vel: nalgebra::Vector3<f64>,
    pub truth_com_acc: nalgebra::Vector3<f64>,
    /// Raw sensor reading, present when the log carries the sensor columns;
    /// enough to re-run the estimation pipeline offline.
    pub sensors: Option<crate::estimation::SensorSample>,
}

/// Read the ground-truth columns back out of a trial log produced by
/// [`write_trial_log`]. Every parse failure names the 1-based line number;
/// a missing end marker is reported as truncation and yields no rows.
pub fn read_replay_log(path: &Path) -> Result<Vec<ReplayRow>, TelemetryError> {
    let text = std::fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let p = path.display().to_string();
    let malformed = |row: usize, message: String| TelemetryError::Malformed {
        path: p.clone(),
        row,
        message,
    };

    let mut columns: Option<Vec<&str>> = None;
    let mut rows = Vec::new();
    let mut end_count: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("# end rows ") {
            end_count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| malformed(lineno, format!("bad end marker {rest:?}")))?,
            );
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols = match &columns {
            None => {
                columns = Some(line.split(',').collect());
                continue;
            }
            Some(c) => c,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(malformed(
                lineno,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let get = |name: &str| -> Result<f64, TelemetryError> {
            let idx = cols
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| malformed(lineno, format!("missing column {name:?}")))?;
            fields[idx]
                .parse()
                .map_err(|_| malformed(lineno, format!("bad value {:?} in {name}", fields[idx])))
        };
        let time = get("time")?;
        let vec3 = |prefix: &str| -> Result<nalgebra::Vector3<f64>, TelemetryError> {
            Ok(nalgebra::Vector3::new(
                get(&format!("{prefix}_x"))?,
                get(&format!("{prefix}_y"))?,
                get(&format!("{prefix}_z"))?,
            ))
        };
        let sensors = if cols.iter().any(|c| *c == "accel_x") {
            let limb = |name: &str| -> Result<crate::five_mass::LimbJoints, TelemetryError> {
                let mut q = Vec::with_capacity(3);
                let mut qd = Vec::with_capacity(3);
                for k in 0..3 {
                    q.push(get(&format!("{name}_q{k}"))?);
                    qd.push(get(&format!("{name}_qd{k}"))?);
                }
                Ok(crate::five_mass::LimbJoints { q, qd })
            };
            Some(crate::estimation::SensorSample {
                timestamp: time,
                accel: vec3("accel")?,
                gyro: vec3("gyro")?,
                joints: crate::five_mass::JointState {
                    left_leg: limb("l_leg")?,
                    right_leg: limb("r_leg")?,
                    left_arm: limb("l_arm")?,
                    right_arm: limb("r_arm")?,
                },
                torso_orientation: nalgebra::Rotation3::from_euler_angles(
                    get("torso_roll")?,
                    get("torso_pitch")?,
                    get("torso_yaw")?,
                ),
            })
        } else {
            None
        };
        rows.push(ReplayRow {
            time,
            truth_com_vel: vec3("truth_vel")?,
            truth_com_acc: vec3("truth_acc")?,
            sensors,
        });
    }
    match end_count {
        Some(n) if n == rows.len() => Ok(rows),
        _ => Err(TelemetryError::Truncated { path: p }),
    }
}

/// Reference-trajectory export row: the open-loop gait references without a
/// plant in the loop.
pub fn write_gait_refs(
    w: &mut impl Write,
    stamp: &RunStamp,
    frames: &[crate::gait::GaitFrame],
    dt: f64,
) -> io::Result<()> {
    stamp.write(w)?;
    writeln!(
        w,
        "time,phase,support,exchange,com_ref_x,com_ref_y,com_ref_z,\
         com_vel_ref_x,com_vel_ref_y,cop_ref_x,cop_ref_y,\
         swing_x,swing_y,swing_z,support_foot_x,support_foot_y"
    )?;
    for (i, f) in frames.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i as f64 * dt,
            f.phase,
            side_tag(f.support),
            f.exchange as u8,
            f.com_ref.x,
            f.com_ref.y,
            f.com_ref.z,
            f.com_vel_ref.x,
            f.com_vel_ref.y,
            f.cop_ref.x,
            f.cop_ref.y,
            f.swing_pose.x,
            f.swing_pose.y,
            f.swing_pose.z,
            f.support_foothold.position.x,
            f.support_foothold.position.y,
        )?;
    }
    writeln!(w, "# end rows {}", frames.len())
}
