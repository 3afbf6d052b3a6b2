use std::f64::consts::PI;

use gauss_quad::GaussLegendre;

use wigner_core::oracle::AnalyticSolution;
use wigner_core::phase::{PhysicalConstants, RunConfig};
use wigner_core::pushforward::{FrozenFlow, NetworkShape};
use wigner_core::residual::{
    bulk_expectation, estimate_residual, sample_times, BulkTerm, ResidualSettings, TimeSampling,
};
use wigner_core::testfuncs::{init_test_set, TestScales};
use wigner_core::trainer::{train, TrainOptions};
use wigner_core::{InitialDecomposition, LibraryPotential, StreamRng, TestFunctionSet};

fn coherent() -> InitialDecomposition {
    InitialDecomposition::coherent(vec![1.0], vec![0.5], 1.0, 1.0, 1.0).unwrap()
}

fn lib(name: &str) -> LibraryPotential {
    LibraryPotential::from_name(name, &[], 1).unwrap()
}

fn frozen(solution: AnalyticSolution) -> FrozenFlow<AnalyticSolution> {
    FrozenFlow {
        flow: solution,
        dim: 1,
    }
}

fn tests(k: usize, seed: u64) -> TestFunctionSet {
    init_test_set(k, 1, &TestScales::default(), &mut StreamRng::new(seed)).unwrap()
}

#[test]
fn exact_flows_leave_only_monte_carlo_noise() {
    let consts = PhysicalConstants::natural(1);
    let cases = [
        (AnalyticSolution::Free { mass: 1.0 }, "free", 1.0),
        (
            AnalyticSolution::Harmonic {
                mass: 1.0,
                omega: 1.0,
            },
            "harmonic",
            PI / 2.0,
        ),
    ];
    for (i, (flow, name, horizon)) in cases.into_iter().enumerate() {
        let settings = ResidualSettings::new(horizon, 10_000);
        let tfs = tests(8, 100 + i as u64);
        let est = estimate_residual(
            &frozen(flow),
            &coherent(),
            &tfs,
            &lib(name),
            &consts,
            &settings,
            &StreamRng::new(7),
        )
        .unwrap();
        for (r, se) in est.per_test.iter().zip(est.std_errors()) {
            assert!(r.abs() <= 3.0 * se, "{name}: {r} vs {se}");
        }
    }
}

#[test]
fn standard_error_shrinks_as_inverse_root_batch() {
    let consts = PhysicalConstants::natural(1);
    let tfs = tests(8, 3);
    let sizes = [1_000usize, 10_000, 100_000];
    let se: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let settings = ResidualSettings::new(1.0, m);
            let est = estimate_residual(
                &frozen(AnalyticSolution::Free { mass: 1.0 }),
                &coherent(),
                &tfs,
                &lib("free"),
                &consts,
                &settings,
                &StreamRng::new(5),
            )
            .unwrap();
            est.std_errors().iter().sum::<f64>() / 8.0
        })
        .collect();
    let slope = (se[2].ln() - se[0].ln()) / ((sizes[2] as f64).ln() - (sizes[0] as f64).ln());
    assert!((-0.6..=-0.4).contains(&slope), "{se:?} {slope}");
}

#[test]
fn uniform_time_estimator_matches_fixed_quadrature() {
    let consts = PhysicalConstants::natural(1);
    let v = lib("quartic");
    let gen = frozen(AnalyticSolution::Harmonic {
        mass: 1.0,
        omega: 1.0,
    });
    let horizon = 1.3;
    let tfs = tests(4, 9);
    let settings = ResidualSettings::new(horizon, 20_000);
    let times = sample_times(
        horizon,
        20_000,
        TimeSampling::Uniform,
        &mut StreamRng::new(1),
    );
    let (mc, mc_se) = bulk_expectation(
        &gen,
        &coherent(),
        &tfs,
        &v,
        &consts,
        &settings,
        &times,
        &StreamRng::new(2),
    )
    .unwrap();
    let rule = GaussLegendre::new(64).unwrap();
    let mut quad = [0.0; 4];
    let mut var = [0.0; 4];
    for (j, &(node, weight)) in rule.as_node_weight_pairs().iter().enumerate() {
        let t = 0.5 * horizon * (node + 1.0);
        let w = 0.5 * horizon * weight;
        let (mean, se) = bulk_expectation(
            &gen,
            &coherent(),
            &tfs,
            &v,
            &consts,
            &settings,
            &vec![t; 2_000],
            &StreamRng::new(10 + j as u64),
        )
        .unwrap();
        for k in 0..4 {
            quad[k] += w * mean[k];
            var[k] += (w * se[k]).powi(2);
        }
    }
    for k in 0..4 {
        let se = ((horizon * mc_se[k]).powi(2) + var[k]).sqrt();
        assert!(
            (horizon * mc[k] - quad[k]).abs() <= 3.0 * se,
            "{k}: {} vs {} ({se})",
            horizon * mc[k],
            quad[k]
        );
    }
}

#[test]
fn shifted_difference_reduces_to_the_force_term_at_small_hbar() {
    let consts = PhysicalConstants {
        hbar: 1e-4,
        mass: 1.0,
        dim: 1,
    };
    let gen = frozen(AnalyticSolution::Harmonic {
        mass: 1.0,
        omega: 1.0,
    });
    let v = lib("quartic");
    let tfs = tests(8, 13);
    let mut settings = ResidualSettings::new(1.0, 2_000);
    let rng = StreamRng::new(17);
    let exact = estimate_residual(&gen, &coherent(), &tfs, &v, &consts, &settings, &rng).unwrap();
    settings.bulk_term = BulkTerm::Classical;
    let classical =
        estimate_residual(&gen, &coherent(), &tfs, &v, &consts, &settings, &rng).unwrap();
    for (a, b) in exact.per_test.iter().zip(&classical.per_test) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn heldout_loss_stays_within_ten_times_the_trained_adversary() {
    let run = RunConfig {
        horizon: 1.0,
        batch_size: 512,
        num_test: 16,
        n_adv: 5,
        lr_gen: 1e-3,
        lr_adv: 1e-2,
        seed: 19,
        epochs: 60,
    };
    let mut opts = TrainOptions::new(run, PhysicalConstants::natural(1));
    opts.shape = NetworkShape {
        hidden: vec![16, 16],
        ..NetworkShape::default()
    };
    opts.eval_every = 20;
    let report = train(&opts, &lib("harmonic"), &coherent(), None, &mut |_| {}).unwrap();
    let evaluated: Vec<_> = report
        .state
        .history
        .iter()
        .filter(|r| r.heldout_loss.is_some())
        .collect();
    assert_eq!(evaluated.len(), 3);
    for row in evaluated {
        let held = row.heldout_loss.unwrap();
        assert!(
            held.is_finite() && held <= 10.0 * row.loss,
            "epoch {}: {held} vs {}",
            row.epoch,
            row.loss
        );
    }
}
