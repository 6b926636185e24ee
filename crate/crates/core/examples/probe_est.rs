use centroidal::config::{default_robot, NoiseConfig, ScenarioConfig, ScenarioKind};
use centroidal::sim::scenario::run_trial;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(|s| s.as_str()) {
        Some("arm") => ScenarioKind::ArmSwing,
        _ => ScenarioKind::ForwardWalk,
    };
    let noisy = args.iter().any(|s| s == "noise");
    let robot = default_robot();
    for variant in ["imu", "limb"] {
        let mut sc = ScenarioConfig::new(kind, 10.0);
        if kind == ScenarioKind::ForwardWalk {
            sc.velocity = [0.15, 0.0];
        }
        if !noisy {
            sc.plant.noise = NoiseConfig::zero();
        }
        sc.toggles.estimator = variant.into();
        let r = run_trial(&robot, &sc);
        println!(
            "{variant}: outcome {:?} acc_mae=({:.4},{:.4},{:.4}) acc_sd=({:.3},{:.3},{:.3}) vel_mae=({:.4},{:.4},{:.4})",
            r.outcome,
            r.acc_stats[0].mean_abs, r.acc_stats[1].mean_abs, r.acc_stats[2].mean_abs,
            r.acc_stats[0].sd, r.acc_stats[1].sd, r.acc_stats[2].sd,
            r.vel_stats[0].mean_abs, r.vel_stats[1].mean_abs, r.vel_stats[2].mean_abs,
        );
    }
}
