use centroidal::config::{default_robot, NoiseConfig, ScenarioConfig, ScenarioKind};
use centroidal::sim::scenario::run_trial;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(|s| s.as_str()) {
        Some("forward") => ScenarioKind::ForwardWalk,
        Some("arm") => ScenarioKind::ArmSwing,
        _ => ScenarioKind::WalkInPlace,
    };
    let dur: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let noisy = args.get(3).map(|s| s == "noise").unwrap_or(false);
    let robot = default_robot();
    let mut sc = ScenarioConfig::new(kind, dur);
    if !noisy {
        sc.plant.noise = NoiseConfig::zero();
    }
    if args.get(3).map(|s| s == "ffoff").unwrap_or(false) {
        sc.toggles.feedforward = false;
    }
    if let Some(b) = args.iter().find_map(|s| s.strip_prefix("bias=")) {
        sc.plant.sag_bias = b.parse().unwrap();
    }
    if let Some(v) = args.get(4).and_then(|s| s.parse::<f64>().ok()) {
        sc.velocity = [v, 0.0];
    }
    let result = if args.iter().any(|s| s == "warm") {
        let cal = run_trial(&robot, &sc).calibration;
        centroidal::sim::scenario::run_trial_with(&robot, &sc, Some(&cal))
    } else {
        run_trial(&robot, &sc)
    };
    println!(
        "outcome {:?} fell_at {:?} steps {} drift {:.4} rms {:.4} ctl_rms {:.4}",
        result.outcome, result.fell_at, result.steps, result.sagittal_drift, result.tracking_rms,
        result.ctl_tracking_rms
    );
    let z = &result.calibration.zero_velocity;
    let n = &result.calibration.nominal_velocity_set;
    println!(
        "cal zero: sup=({:+.4},{:+.4}) sw=({:+.4},{:+.4}) h=({:+.4},{:+.4}) v={:+.4} lat={:.3}",
        z.support_offset.x, z.support_offset.y, z.swing_offset.x, z.swing_offset.y,
        z.support_height, z.swing_height, z.velocity_bias, z.latency
    );
    println!(
        "cal nom:  sup=({:+.4},{:+.4}) sw=({:+.4},{:+.4}) h=({:+.4},{:+.4}) v={:+.4} lat={:.3}",
        n.support_offset.x, n.support_offset.y, n.swing_offset.x, n.swing_offset.y,
        n.support_height, n.swing_height, n.velocity_bias, n.latency
    );
    for (i, r) in result.rows.iter().enumerate() {
        if (i % 20 == 0 && r.time > 0.4) || r.exchanged {
            println!(
                "t={:.3} ph={:.2} sup={:?} ex={} com=({:+.4},{:+.4},{:.3}) cmd=({:+.4},{:+.4}) ref=({:+.4},{:+.4}) copref=({:+.4},{:+.4}) shift_x={:+.4} ffsx={:+.4} fflat={:.3} tilt={:+.3} ikf={}",
                r.time, r.phase, r.support, r.exchanged as u8,
                r.truth_com.x, r.truth_com.y, r.truth_com.z,
                r.com_cmd.x, r.com_cmd.y,
                r.ref_com.x, r.ref_com.y,
                r.cop_ref.x, r.cop_ref.y,
                r.world_shift_x,
                r.ff_support_x,
                r.ff_latency,
                r.tilt,
                r.ik_failures,
            );
        }
    }
}
