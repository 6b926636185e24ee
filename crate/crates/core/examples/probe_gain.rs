use centroidal::config::{default_robot, NoiseConfig, ScenarioConfig, ScenarioKind};
use centroidal::feedforward::{FfCalibration, FfChannelSet};
use centroidal::sim::scenario::run_trial_with;
use nalgebra::Vector3;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let channel = args.get(1).map(|s| s.as_str()).unwrap_or("none");
    let amp: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let robot = default_robot();
    let mut sc = ScenarioConfig::new(ScenarioKind::WalkInPlace, 8.0);
    sc.plant.noise = NoiseConfig::zero();
    sc.toggles.feedforward = false;
    if let Ok(b) = std::env::var("PROBE_BIAS") {
        sc.plant.sag_bias = b.parse().unwrap();
    }
    if let Ok(d) = std::env::var("PROBE_DUR") {
        sc.duration = d.parse().unwrap();
    }

    let mut set = FfChannelSet::default();
    set.inertia_gains = Vector3::new(1.0, 1.0, 1.0);
    match channel {
        "supx" => set.support_offset.x = amp,
        "supy" => set.support_offset.y = amp,
        "swx" => set.swing_offset.x = amp,
        "swy" => set.swing_offset.y = amp,
        "suph" => set.support_height = amp,
        "swh" => set.swing_height = amp,
        "vel" => set.velocity_bias = amp,
        _ => {}
    }
    let cal = FfCalibration {
        zero_velocity: set,
        nominal_velocity_set: set,
        nominal_velocity: 0.2,
    };
    let result = run_trial_with(&robot, &sc, Some(&cal));
    if let Some(r) = result.rows.iter().find(|r| r.est_com.norm() > 10.0) {
        println!(
            "est diverged at t={:.3}: est_com=({:.2},{:.2},{:.2}) ikf={} support={:?}",
            r.time, r.est_com.x, r.est_com.y, r.est_com.z, r.ik_failures, r.support
        );
    }
    for w in result.rows.windows(2) {
        if w[1].exchanged && w[1].time < 3.0 {
            println!("exchange t={:.3} sup={:?}", w[1].time, w[1].support);
        }
    }
    let shift = result.rows.last().map(|r| r.world_shift_x).unwrap_or(0.0);
    println!(
        "channel {channel} amp {amp} outcome {:?} steps {} drift {:.4} shift {:+.4}",
        result.outcome, result.steps, result.sagittal_drift, shift
    );
}
