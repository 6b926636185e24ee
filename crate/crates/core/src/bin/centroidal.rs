//! Command-line front end: wires configs, scenarios, replay logs, and CSV
//! outputs together. All numerics live in the library; the commands here are
//! plumbing around `sim::scenario` and `telemetry`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;

use centroidal::config::{
    default_robot, load_robot, load_scenario, ScenarioConfig, ScenarioKind,
};
use centroidal::estimation::{CentroidalEstimator, EstimatorVariant};
use centroidal::five_mass::{FiveMassConfig, Side};
use centroidal::gait::GaitGenerator;
use centroidal::sim::plant::PlantOutcome;
use centroidal::sim::scenario::{
    calibrate_feedforward, error_stats, run_push_sweep, run_trial_with, ErrorStats,
};
use centroidal::telemetry::{
    read_calibration, read_replay_log, write_calibration, write_error_stats, write_gait_refs,
    write_sweep_summary, write_trial_log, write_trial_summary, ReplayRow, RunStamp,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn as_bool(self) -> bool {
        matches!(self, Toggle::On)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Imu,
    Limb,
}

#[derive(Debug, Parser)]
#[command(name = "centroidal", version, about = "Centroidal state estimation and gait control toolkit")]
struct Cli {
    /// Robot configuration TOML (defaults to the built-in 20 kg model).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scenario: a built-in name (walk_in_place, forward_walk, arm_swing,
    /// push_sweep) or a path to a scenario TOML.
    #[arg(long, global = true, default_value = "walk_in_place")]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the feedforward toggle.
    #[arg(long, global = true, value_enum)]
    feedforward: Option<Toggle>,
    /// Override the estimator variant.
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Override the tilt-feedback toggle.
    #[arg(long = "tilt-feedback", global = true, value_enum)]
    tilt_feedback: Option<Toggle>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a closed-loop trial (or a push sweep) and write log + summary CSVs.
    Simulate {
        /// Exit nonzero if the robot falls.
        #[arg(long)]
        expect_recover: bool,
        /// Override the scenario duration (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Warm-start the feedforward bank from a calibration file.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Re-run both estimator variants against a trial's ground truth and
    /// report per-axis error statistics.
    EstimateReplay {
        /// Trial log CSV supplying the ground-truth columns. Without it the
        /// scenario is simulated first and its truth is used directly.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run the feedforward calibration procedure at both velocity anchors
    /// and persist the channel file.
    CalibrateFf {
        /// Warm-start from a previously persisted calibration file.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Steps allowed for the latency estimate to settle.
        #[arg(long, default_value_t = 20)]
        step_budget: usize,
    },
    /// Export the open-loop gait reference trajectories as CSV.
    ExportRefs {
        /// Trajectory duration (s).
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
    },
}

/// Error carrying the process exit code: 2 for usage/config problems,
/// 1 for runtime failures.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: String) -> Self {
        Self { code: 2, message }
    }

    fn runtime(message: String) -> Self {
        Self { code: 1, message }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn resolve_scenario(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut sc = if let Some(kind) = ScenarioKind::parse(&cli.scenario) {
        let duration = match kind {
            ScenarioKind::WalkInPlace => 15.0,
            ScenarioKind::ForwardWalk => 10.0,
            ScenarioKind::ArmSwing => 10.0,
            ScenarioKind::PushSweep => 6.0,
        };
        let mut sc = ScenarioConfig::new(kind, duration);
        if kind == ScenarioKind::ForwardWalk {
            sc.velocity = [0.15, 0.0];
        }
        if kind == ScenarioKind::PushSweep && sc.push_levels.is_empty() {
            sc.push_levels = vec![4.0, 8.0, 12.0, 16.0, 20.0];
        }
        sc
    } else {
        load_scenario(Path::new(&cli.scenario)).map_err(|e| CliError::config(e.to_string()))?
    };
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    if let Some(ff) = cli.feedforward {
        sc.toggles.feedforward = ff.as_bool();
    }
    if let Some(tf) = cli.tilt_feedback {
        sc.toggles.tilt_feedback = tf.as_bool();
        sc.toggles.step_feedback = tf.as_bool();
    }
    if let Some(est) = cli.estimator {
        sc.toggles.estimator = match est {
            EstimatorArg::Imu => "imu".into(),
            EstimatorArg::Limb => "limb".into(),
        };
    }
    sc.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(sc)
}

fn resolve_robot(cli: &Cli) -> Result<FiveMassConfig, CliError> {
    match &cli.config {
        Some(path) => load_robot(path).map_err(|e| CliError::config(e.to_string())),
        None => Ok(default_robot()),
    }
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let robot = resolve_robot(&cli)?;
    let scenario = resolve_scenario(&cli)?;
    match &cli.command {
        Command::Simulate { expect_recover, duration, warm_start } => {
            cmd_simulate(&cli, &robot, scenario, *expect_recover, *duration, warm_start.as_deref())
        }
        Command::EstimateReplay { replay } => {
            cmd_estimate_replay(&cli, &robot, scenario, replay.as_deref())
        }
        Command::CalibrateFf { warm_start, step_budget } => {
            cmd_calibrate_ff(&cli, &robot, scenario, warm_start.as_deref(), *step_budget)
        }
        Command::ExportRefs { duration } => cmd_export_refs(&cli, scenario, *duration),
    }
}

fn load_warm_start(path: Option<&Path>) -> Result<Option<centroidal::feedforward::FfCalibration>, CliError> {
    match path {
        Some(p) => read_calibration(p).map(Some).map_err(|e| CliError::config(e.to_string())),
        None => Ok(None),
    }
}

fn cmd_simulate(
    cli: &Cli,
    robot: &FiveMassConfig,
    mut scenario: ScenarioConfig,
    expect_recover: bool,
    duration: Option<f64>,
    warm_start: Option<&Path>,
) -> Result<(), CliError> {
    if let Some(d) = duration {
        scenario.duration = d;
        scenario.validate().map_err(|e| CliError::config(e.to_string()))?;
    }
    let stamp = RunStamp::new("simulate", &scenario);

    if scenario.kind == ScenarioKind::PushSweep {
        let sweep = run_push_sweep(robot, &scenario);
        let mut w = out_file(&cli.out, "sweep_summary.csv")?;
        write_sweep_summary(&mut w, &stamp, &sweep)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        println!("force_n  forward  backward  (of {})", scenario.pushes_per_level);
        let mut forces: Vec<f64> = sweep.cells.iter().map(|c| c.force).collect();
        forces.sort_by(|a, b| a.partial_cmp(b).unwrap());
        forces.dedup();
        for f in forces {
            println!(
                "{f:>7.1}  {:>7}  {:>8}",
                sweep.recovered_at(1.0, f),
                sweep.recovered_at(-1.0, f)
            );
        }
        println!("wrote {}", cli.out.join("sweep_summary.csv").display());
        return Ok(());
    }

    let cal = load_warm_start(warm_start)?;
    let result = run_trial_with(robot, &scenario, cal.as_ref());

    let mut w = out_file(&cli.out, "trial_log.csv")?;
    write_trial_log(&mut w, &stamp, &result.rows).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut w = out_file(&cli.out, "trial_summary.csv")?;
    write_trial_summary(&mut w, &stamp, &result).map_err(|e| CliError::runtime(e.to_string()))?;

    println!(
        "outcome {:?}  steps {}  sagittal_drift {:.4} m  tracking_rms {:.4} m  ctl_tracking_rms {:.4} m",
        result.outcome, result.steps, result.sagittal_drift, result.tracking_rms,
        result.ctl_tracking_rms
    );
    println!("wrote {}", cli.out.join("trial_log.csv").display());

    if expect_recover && result.outcome != PlantOutcome::Nominal {
        return Err(CliError::runtime(format!(
            "robot fell at t = {:.3} s",
            result.fell_at.unwrap_or(f64::NAN)
        )));
    }
    Ok(())
}

/// Re-run one estimator variant over recorded sensor samples and compute
/// per-axis error statistics against the recorded ground truth, skipping the
/// first second of filter convergence.
fn replay_variant(
    robot: &FiveMassConfig,
    scenario: &ScenarioConfig,
    variant: EstimatorVariant,
    rows: &[ReplayRow],
) -> Result<([ErrorStats; 3], [ErrorStats; 3]), CliError> {
    let mut estimator =
        CentroidalEstimator::new(robot.clone(), scenario.estimator.clone(), variant);
    estimator.reset_support(
        Side::Right,
        nalgebra::Vector3::new(0.0, scenario.gait.stance_width / 2.0, 0.0),
    );
    let mut vel_err: [Vec<f64>; 3] = Default::default();
    let mut acc_err: [Vec<f64>; 3] = Default::default();
    let skip = (1.0 / scenario.plant.period) as usize;
    for (i, row) in rows.iter().enumerate() {
        let sample = row.sensors.as_ref().ok_or_else(|| {
            CliError::config("replay log lacks the sensor columns; re-log with this tool version".into())
        })?;
        let frame = estimator
            .update(sample)
            .map_err(|e| CliError::runtime(format!("estimator failed at row {}: {e}", i + 1)))?;
        if i < skip {
            continue;
        }
        for axis in 0..3 {
            vel_err[axis].push(frame.state.com_velocity[axis] - row.truth_com_vel[axis]);
            acc_err[axis].push(frame.state.com_acceleration[axis] - row.truth_com_acc[axis]);
        }
    }
    let mut vel = [ErrorStats::default(); 3];
    let mut acc = [ErrorStats::default(); 3];
    for axis in 0..3 {
        vel[axis] = error_stats(&vel_err[axis]);
        acc[axis] = error_stats(&acc_err[axis]);
    }
    Ok((vel, acc))
}

fn cmd_estimate_replay(
    cli: &Cli,
    robot: &FiveMassConfig,
    scenario: ScenarioConfig,
    replay: Option<&Path>,
) -> Result<(), CliError> {
    let dt = scenario.plant.period;
    // Sensor + truth series: from the replay log if given, otherwise from a
    // fresh simulation of the scenario itself.
    let rows: Vec<ReplayRow> = match replay {
        Some(path) => read_replay_log(path).map_err(|e| CliError::config(e.to_string()))?,
        None => {
            let r = run_trial_with(robot, &scenario, None);
            r.rows
                .iter()
                .map(|row| ReplayRow {
                    time: row.time,
                    truth_com_vel: row.truth_com_vel,
                    truth_com_acc: row.truth_com_acc,
                    sensors: Some(row.sensors.clone()),
                })
                .collect()
        }
    };
    if rows.len() < (2.0 / dt) as usize {
        return Err(CliError::config(format!(
            "replay provides only {} rows; need at least 2 s of data",
            rows.len()
        )));
    }

    let mut per_variant = Vec::new();
    for (name, variant) in
        [("imu", EstimatorVariant::ImuOnly), ("limb", EstimatorVariant::LimbDynamics)]
    {
        let (vel, acc) = replay_variant(robot, &scenario, variant, &rows)?;
        per_variant.push((name, vel, acc));
    }

    let stamp = RunStamp::new("estimate-replay", &scenario);
    let mut w = out_file(&cli.out, "estimate_replay.csv")?;
    let rows: Vec<(&str, [ErrorStats; 3], [ErrorStats; 3])> = per_variant.clone();
    write_error_stats(&mut w, &stamp, &rows).map_err(|e| CliError::runtime(e.to_string()))?;

    println!("variant  series   axis   median        sd        mean_abs");
    for (variant, vel, acc) in &per_variant {
        for (series, stats) in [("com_vel", vel), ("com_acc", acc)] {
            for (axis, name) in ["x", "y", "z"].iter().enumerate() {
                let s = stats[axis];
                println!(
                    "{variant:<8} {series:<8} {name:<4} {:>10.5} {:>10.5} {:>10.5}",
                    s.median, s.sd, s.mean_abs
                );
            }
        }
    }
    let imu_ax = per_variant[0].2[0].mean_abs;
    let limb_ax = per_variant[1].2[0].mean_abs;
    println!(
        "com_acc x mean_abs: imu {imu_ax:.5}, limb {limb_ax:.5} ({:+.1}%)",
        100.0 * (limb_ax - imu_ax) / imu_ax
    );
    println!("wrote {}", cli.out.join("estimate_replay.csv").display());
    Ok(())
}

fn cmd_calibrate_ff(
    cli: &Cli,
    robot: &FiveMassConfig,
    scenario: ScenarioConfig,
    warm_start: Option<&Path>,
    step_budget: usize,
) -> Result<(), CliError> {
    let warm = load_warm_start(warm_start)?;

    // Zero-velocity anchor: walk in place.
    let mut sc0 = scenario.clone();
    sc0.kind = ScenarioKind::WalkInPlace;
    sc0.velocity = [0.0, 0.0];
    let zero_report = calibrate_feedforward(robot, &sc0, warm.as_ref());

    // Nominal-velocity anchor: forward walk warm-started from the zero run.
    let mut sc1 = scenario.clone();
    sc1.kind = ScenarioKind::ForwardWalk;
    if sc1.velocity[0] == 0.0 {
        sc1.velocity = [0.15, 0.0];
    }
    let report = calibrate_feedforward(robot, &sc1, Some(&zero_report.calibration));

    let settle = zero_report.latency_settle_steps;
    let latency = report.calibration.zero_velocity.latency;
    match settle {
        Some(steps) if steps <= step_budget => {
            println!("latency settled after {steps} steps: t_l = {latency:.4} s");
        }
        _ => {
            let hist: Vec<String> = zero_report
                .latency_history
                .iter()
                .map(|l| format!("{l:.4}"))
                .collect();
            return Err(CliError::runtime(format!(
                "latency estimate did not settle within {step_budget} steps; history: [{}]",
                hist.join(", ")
            )));
        }
    }

    let stamp = RunStamp::new("calibrate-ff", &scenario);
    let mut w = out_file(&cli.out, "ff_calibration.toml")?;
    write_calibration(&mut w, &stamp, &report.calibration)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    for (name, set) in [
        ("zero", &report.calibration.zero_velocity),
        ("nominal", &report.calibration.nominal_velocity_set),
    ] {
        println!(
            "{name:<8} sup ({:+.4}, {:+.4})  sw ({:+.4}, {:+.4})  h ({:+.4}, {:+.4})  vel {:+.4}  t_l {:.4}",
            set.support_offset.x,
            set.support_offset.y,
            set.swing_offset.x,
            set.swing_offset.y,
            set.support_height,
            set.swing_height,
            set.velocity_bias,
            set.latency
        );
    }
    println!("wrote {}", cli.out.join("ff_calibration.toml").display());
    Ok(())
}

fn cmd_export_refs(cli: &Cli, scenario: ScenarioConfig, duration: f64) -> Result<(), CliError> {
    let mut gait = scenario.gait.clone();
    gait.control_period = scenario.plant.period;
    let dt = gait.control_period;
    let mut gen = GaitGenerator::new(
        gait.clone(),
        Side::Right,
        Vector2::new(0.0, gait.stance_width / 2.0),
    );
    gen.set_velocity(scenario.velocity_vec(), 0.0);
    let ticks = (duration / dt).round() as usize;
    let frames: Vec<_> = (0..ticks).map(|_| gen.tick()).collect();

    let stamp = RunStamp::new("export-refs", &scenario);
    let mut w = out_file(&cli.out, "gait_refs.csv")?;
    write_gait_refs(&mut w, &stamp, &frames, dt).map_err(|e| CliError::runtime(e.to_string()))?;
    w.flush().map_err(|e| CliError::runtime(e.to_string()))?;
    println!("wrote {} ({} rows)", cli.out.join("gait_refs.csv").display(), frames.len());
    Ok(())
}
