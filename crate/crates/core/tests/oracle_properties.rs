use wigner_core::oracle::{
    coherent_wave, equivalence_sweep, grid_weak_residual, split_step_evolve, theta_apply,
    theta_apply_truncated, wigner_snapshots, wigner_transform, Axis, SweepSettings, SweepState,
};
use wigner_core::potentials::{FdSteps, MoyalOrder};
use wigner_core::{LibraryPotential, TestFunction};

#[test]
fn operator_and_shifted_difference_forms_agree_on_the_full_sweep() {
    let cases = equivalence_sweep(&SweepSettings::default()).unwrap();
    assert_eq!(cases.len(), 4 * 3 * 20 * 2);
    let worst = cases.iter().max_by(|a, b| a.gap.total_cmp(&b.gap)).unwrap();
    assert!(worst.gap <= 1e-6, "{worst:?}");
}

#[test]
fn truncated_operator_error_shrinks_at_fourth_order_for_cosine() {
    let v = LibraryPotential::from_name("cosine", &[], 1).unwrap();
    let f = SweepState::Gaussian.grid(8.0, 256).unwrap();
    let hbars = [1.0, 0.5, 0.25];
    let gaps: Vec<f64> = hbars
        .iter()
        .map(|&h| {
            let exact = theta_apply(&v, &f, h).unwrap();
            let trunc =
                theta_apply_truncated(&v, &f, h, MoyalOrder::Third, FdSteps::default()).unwrap();
            exact.l2_distance(&trunc).unwrap()
        })
        .collect();
    let slope = (gaps[0].ln() - gaps[2].ln()) / (hbars[0].ln() - hbars[2].ln());
    assert!((3.7..=4.3).contains(&slope), "{gaps:?} {slope}");
}

fn weak_residuals(name: &str) -> Vec<f64> {
    let v = LibraryPotential::from_name(name, &[], 1).unwrap();
    let axis = Axis::new(-8.0, 8.0, 256).unwrap();
    let psi = coherent_wave(axis, 1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
    let (dt, steps, every) = (5e-4, 2000, 50);
    let snaps = wigner_snapshots(&psi, &v, 1.0, 1.0, dt, steps, every, axis).unwrap();
    let tfs = [
        TestFunction::new(vec![1.0], vec![1.0], 0.0, 0.0).unwrap(),
        TestFunction::new(vec![-0.6], vec![1.7], 1.2, 0.4).unwrap(),
        TestFunction::new(vec![1.9], vec![-0.8], -0.5, 2.0).unwrap(),
    ];
    tfs.iter()
        .map(|tf| grid_weak_residual(&snaps, dt * every as f64, &v, tf, 1.0, 1.0).unwrap())
        .collect()
}

#[test]
fn split_step_wigner_snapshots_satisfy_the_weak_form() {
    for name in ["harmonic", "quartic"] {
        for r in weak_residuals(name) {
            assert!(r.abs() <= 1e-4, "{name}: {r}");
        }
    }
}

#[test]
fn harmonic_evolution_returns_after_one_period() {
    let v = LibraryPotential::from_name("harmonic", &[], 1).unwrap();
    let axis = Axis::new(-8.0, 8.0, 256).unwrap();
    let psi = coherent_wave(axis, 1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    let steps = 64_000;
    let dt = 2.0 * std::f64::consts::PI / steps as f64;
    let out = split_step_evolve(&psi, &v, 1.0, 1.0, dt, steps).unwrap();
    let f0 = wigner_transform(&psi, 1.0, axis).unwrap();
    let f1 = wigner_transform(&out, 1.0, axis).unwrap();
    let d = f0.l2_distance(&f1).unwrap();
    assert!(d <= 1e-6, "{d}");
}
