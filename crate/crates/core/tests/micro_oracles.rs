use trafficrecon_core::datagen::{
    discretize_positions, generate_dataset, GenerateOptions, Scenario,
};
use trafficrecon_core::fleet::FleetConfig;
use trafficrecon_core::microsim::{
    check_maximum_principle, ftl_full_final, ftl_full_simulate, simulate_probes,
};
use trafficrecon_core::Greenshields;

fn fleet_start(vehicles: usize) -> (Vec<f64>, FleetConfig<f64>) {
    let scenario = Scenario::waves(vehicles, 0.1);
    let cfg = scenario.fleet(vehicles).unwrap();
    (discretize_positions(&scenario.profile, &cfg).unwrap(), cfg)
}

#[test]
fn euler_is_first_order() {
    let (x0, cfg) = fleet_start(40);
    let reference = ftl_full_final(&x0, &cfg, &Greenshields, 1 << 16).unwrap();
    let err = |steps: usize| {
        let xs = ftl_full_final(&x0, &cfg, &Greenshields, steps).unwrap();
        xs.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [1000, 2000, 4000, 8000].iter().map(|&k| err(k)).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(
            (0.8..1.2).contains(&order),
            "observed order {order} from {errors:?}"
        );
    }
}

#[test]
fn ordering_is_preserved_over_full_trajectory() {
    let (x0, cfg) = fleet_start(300);
    let traj = ftl_full_simulate(&x0, &cfg, &Greenshields, 1000).unwrap();
    for (_, row) in traj.rows() {
        assert!(row
            .windows(2)
            .all(|w| w[1] - w[0] >= cfg.car_length() * (1.0 - 1e-6)));
    }
}

#[test]
fn maximum_principle_holds_for_both_presets() {
    for scenario in [Scenario::waves(500, 0.1), Scenario::shock(500, 0.1)] {
        let ds = generate_dataset(&scenario, &Greenshields, &GenerateOptions::default()).unwrap();
        let traj = simulate_probes(
            &ds.ground_truth_alpha,
            &ds.train_obs,
            &ds.fleet,
            &Greenshields,
            1000,
        )
        .unwrap();
        let report = check_maximum_principle(
            &traj,
            &ds.ground_truth_alpha,
            &ds.fleet,
            &Greenshields,
            1e-3,
        )
        .unwrap();
        assert_eq!(report.violations, 0, "worst slack {}", report.worst_slack);
        assert_eq!(report.steps.len(), 1001);
    }
}
