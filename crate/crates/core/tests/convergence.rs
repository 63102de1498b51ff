use carfollow::oracles::{gipps_speed_sup_error, GippsBrakingSolution};
use carfollow::sim::{run, Scenario};
use carfollow::{ModelId, ModelParams, StepSize};

fn terminal_spacing(model: ModelId, eps: f64) -> f64 {
    let sc = Scenario::slvp(model, ModelParams::default(), StepSize::new(eps).unwrap(), 10.0, 150.0, 30.0);
    let tr = run(&sc).unwrap();
    assert!(tr.terminal_error.is_none());
    tr.last().state.spacing
}

// |z_end(ε) − z_end(ε/2)| ≤ C·ε, with C fitted at ε = 0.01 on the run
// (v0, z0) = (10 m/s, 150 m), t_end = 30 s, and frozen with some headroom.
const FROZEN_C: [(ModelId, f64); 3] = [
    (ModelId::IDM, 1.5e-3),
    (ModelId::GippsSimplified, 2.5e-5),
    (ModelId::BANewell, 3.5e-4),
];

#[test]
fn terminal_spacing_converges_at_first_order() {
    for (model, c) in FROZEN_C {
        let steps: Vec<f64> = (0..5).map(|k| 0.02 / 2f64.powi(k)).collect();
        let z: Vec<f64> = steps.iter().map(|&e| terminal_spacing(model, e)).collect();
        let diffs: Vec<f64> = z.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        for (d, e) in diffs.iter().zip(&steps) {
            assert!(*d <= c * e, "{model}: |dz| = {d:e} at eps = {e}");
        }
        for w in diffs.windows(2) {
            let ratio = w[1] / w[0];
            assert!((ratio - 0.5).abs() < 0.1, "{model}: ratio {ratio}");
        }
    }
}

#[test]
fn gipps_oracle_error_halves_with_the_step() {
    let sol = GippsBrakingSolution::new(ModelParams::default(), 30.0).unwrap();
    let errors: Vec<f64> = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
        .iter()
        .map(|&e| gipps_speed_sup_error(&sol, StepSize::new(e).unwrap(), sol.params.zeta).unwrap())
        .collect();
    for w in errors.windows(2) {
        let ratio = w[1] / w[0];
        assert!((ratio - 0.5).abs() <= 0.1, "ratio {ratio} from {errors:?}");
    }
    let fine = gipps_speed_sup_error(&sol, StepSize::new(1e-4).unwrap(), sol.params.zeta).unwrap();
    assert!(fine < 1e-3, "{fine}");
}

#[test]
fn identical_scenarios_give_identical_trajectories() {
    let sc = Scenario::slvp(ModelId::IDM, ModelParams::highway(), StepSize::default(), 0.0, 500.0, 60.0);
    let mut a = Vec::new();
    let mut b = Vec::new();
    run(&sc).unwrap().write_csv(&mut a).unwrap();
    run(&sc).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}
