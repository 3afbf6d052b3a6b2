//! Acceptance criteria 1-9. Each test writes one `criterion N [PASS|FAIL]`
//! line straight to stderr, so the lines show up even when output capture is
//! on.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use wigner_cli::checks::{
    classical_limit_errors, cosine_truncation_errors, first_excited_negative_volume_on,
    frozen_residual_ratio, frozen_standard_errors, gradient_mismatch, loglog_slope,
    moyal_termination_gap, push_identity_failures, residual_potential_calls, signed_unit_gap,
    sweep_worst_gap,
};
use wigner_cli::evaluate::EvaluateSummary;
use wigner_cli::output::strip_timestamp;
use wigner_cli::ExperimentConfig;
use wigner_core::oracle::{AnalyticSolution, SweepSettings};
use wigner_core::pushforward::{first_excited_negative_volume, FrozenFlow};
use wigner_core::{InitialDecomposition, LibraryPotential};

fn report(n: u8, passed: bool, what: &str) {
    let mark = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} [{mark}] {what}");
}

fn lib(name: &str) -> LibraryPotential {
    LibraryPotential::from_name(name, &[], 1).unwrap()
}

#[test]
fn criterion_1_operator_equivalence_sweep() {
    let start = Instant::now();
    let (worst, cases) = sweep_worst_gap(&SweepSettings::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let passed = cases == 4 * 3 * 20 * 2 && worst <= 1e-6 && secs <= 120.0;
    report(
        1,
        passed,
        &format!("{cases} cases, worst relative gap {worst:.2e} (<= 1e-6), {secs:.1} s (<= 120 s)"),
    );
    assert!(passed);
}

#[test]
fn criterion_2_classical_limit_slope() {
    let hbars = [1e-1, 1e-2, 1e-3];
    let errs = classical_limit_errors(&hbars).unwrap();
    let slope = loglog_slope(&hbars, &errs);
    let passed = (1.9..=2.1).contains(&slope);
    report(
        2,
        passed,
        &format!("log-log slope {slope:.4} in [1.9, 2.1], errors {errs:?}"),
    );
    assert!(passed);
}

/// The odd-derivative series of a degree-5 polynomial has a fifth-order term
/// that the third-order truncation drops, so the degree-5 part of this
/// criterion cannot hold; it is measured and reported, and the attainable
/// parts are asserted.
#[test]
fn criterion_3_moyal_recovery() {
    let gaps: Vec<f64> = (0..=5)
        .map(|d| moyal_termination_gap(d, 200, 300 + d as u64).unwrap())
        .collect();
    let hbars = [1.0, 0.5, 0.25];
    let slope = loglog_slope(&hbars, &cosine_truncation_errors(&hbars).unwrap());
    let low_degrees = gaps[..5].iter().all(|&g| g <= 1e-8);
    let degree_five = gaps[5] <= 1e-8;
    let cosine = (3.7..=4.3).contains(&slope);
    report(
        3,
        low_degrees && degree_five && cosine,
        &format!(
            "worst relative gap by degree 0..5 {gaps:?} (<= 1e-8; degree 5 {}), cosine truncation slope {slope:.3} in [3.7, 4.3]",
            if degree_five { "holds" } else { "fails: fifth-order remainder" }
        ),
    );
    assert!(low_degrees, "{gaps:?}");
    assert!(cosine, "{slope}");
}

#[test]
fn criterion_3_degree_five_gap_is_the_fifth_order_term() {
    use wigner_core::potentials::{
        moyal_truncated_term, potential_difference, FdSteps, MoyalOrder, PotentialKind,
    };
    // x^5: the difference quotient carries hbar^4 w^5 V'''''/1920 = hbar^4 w^5 / 16
    // beyond the third-order expansion; the five-point stencil for the third
    // derivative adds its own h^2/4 g''''' = 30 h^2 w^5, scaled by hbar^2/24.
    let v = LibraryPotential::new(
        PotentialKind::Polynomial::<f64> {
            coeffs: vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        },
        1,
    )
    .unwrap();
    for (x, w, h) in [(0.3, 1.0, 1.0), (-1.2, 0.7, 0.5), (0.0, 1.5, 2.0)] {
        let d = potential_difference(&v, &[x], &[w], h).unwrap();
        let m =
            moyal_truncated_term(&v, &[x], &[w], h, MoyalOrder::Third, FdSteps::default()).unwrap();
        let step = FdSteps::<f64>::default().third;
        let expect = w.powi(5) * (h.powi(4) / 16.0 - 1.25 * h * h * step * step);
        assert!(
            (d - m - expect).abs() <= 1e-6 * expect.abs().max(1.0),
            "{x} {w} {h}: {} vs {expect}",
            d - m
        );
    }
}

#[test]
fn criterion_4_gradients_match_finite_differences() {
    let start = Instant::now();
    let coherent = InitialDecomposition::coherent(vec![1.0], vec![0.5], 1.0, 1.0, 1.0).unwrap();
    let excited = InitialDecomposition::first_excited(1, 1.0, 1.0, 1.0).unwrap();
    let (a, na) = gradient_mismatch(&coherent, true).unwrap();
    let (b, nb) = gradient_mismatch(&excited, false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = a.max(b);
    // Each run covers both networks (<= 200 parameters together), alpha when
    // trainable, and the adversary.
    let passed = worst <= 1e-4 && secs <= 30.0 && na <= 200 + 8 && nb <= 200 + 9;
    report(4, passed, &format!("worst relative mismatch {worst:.2e} (<= 1e-4) over {} gradients, {secs:.2} s (<= 30 s)", na + nb));
    assert!(passed);
}

#[test]
fn criterion_5_exact_flows_and_standard_error_scaling() {
    let free = FrozenFlow {
        flow: AnalyticSolution::Free { mass: 1.0 },
        dim: 1,
    };
    let harmonic = FrozenFlow {
        flow: AnalyticSolution::Harmonic {
            mass: 1.0,
            omega: 1.0,
        },
        dim: 1,
    };
    let rf = frozen_residual_ratio(&free, &lib("free"), 1.0, 10_000, 16, 501).unwrap();
    let rh = frozen_residual_ratio(&harmonic, &lib("harmonic"), PI / 2.0, 10_000, 16, 503).unwrap();
    let sizes = [1_000usize, 10_000, 100_000];
    let se = frozen_standard_errors(&sizes, 8, 505).unwrap();
    let slope = loglog_slope(&sizes.map(|m| m as f64), &se);
    let passed = rf <= 3.0 && rh <= 3.0 && (-0.6..=-0.4).contains(&slope);
    report(
        5,
        passed,
        &format!("max |R|/SE free {rf:.2}, harmonic {rh:.2} (<= 3 at M = 1e4), SE slope {slope:.3} in [-0.6, -0.4]"),
    );
    assert!(passed);
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wigner")
}

fn wigner(args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn criterion_6_training_tracks_the_classical_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let start = Instant::now();
    let train = wigner(&[
        "--preset",
        "harmonic-coherent-1d",
        "--out",
        path_str(out),
        "train",
    ]);
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );
    let times = [PI / 8.0, PI / 4.0, PI / 2.0];
    let list = times.map(|t| format!("{t:.17}")).join(",");
    let eval = wigner(&[
        "--preset",
        "harmonic-coherent-1d",
        "--out",
        path_str(out),
        "evaluate",
        "--times",
        &list,
    ]);
    assert!(
        eval.status.success(),
        "{}",
        String::from_utf8_lossy(&eval.stderr)
    );
    let secs = start.elapsed().as_secs_f64();
    let summary: EvaluateSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("evaluate_summary.json")).unwrap())
            .unwrap();
    let cfg = ExperimentConfig::preset("harmonic-coherent-1d").unwrap();
    let (x0, p0) = (cfg.initial.center_x[0], cfg.initial.center_p[0]);
    let mut worst: f64 = 0.0;
    let mut flagged = 0;
    for ts in &summary.times {
        let t = ts.t;
        let (cx, cp) = (x0 * t.cos() + p0 * t.sin(), p0 * t.cos() - x0 * t.sin());
        worst = worst
            .max((ts.mean_x[0] - cx).abs())
            .max((ts.mean_p[0] - cp).abs());
        flagged += ts.flagged_bins;
    }
    let passed = summary.times.len() == 3 && worst <= 0.05 && flagged == 0 && secs <= 1800.0;
    report(
        6,
        passed,
        &format!("max mean error {worst:.4} (<= 0.05), {flagged} marginal bins below -3 SE, {:.1} min (<= 30)", secs / 60.0),
    );
    assert!(passed);
}

#[test]
fn criterion_7_first_excited_negative_volume() {
    let coarse = first_excited_negative_volume_on(128).unwrap();
    let fine = first_excited_negative_volume_on(256).unwrap();
    let pinned = first_excited_negative_volume();
    let passed = (coarse - fine).abs() <= 1e-3 && (pinned - fine).abs() <= 1e-3;
    report(
        7,
        passed,
        &format!("negative volume 128: {coarse:.6}, 256: {fine:.6} (agree to 1e-3); constant used for alpha init {pinned:.6}"),
    );
    assert!(passed);
}

#[test]
fn criterion_8_architecture_guarantees() {
    let failures = push_identity_failures(10_000, 801).unwrap();
    let unit = signed_unit_gap(&[-8.0, -2.0, -0.5, 0.0, 0.3, 1.0, 5.0], 1_000, 803).unwrap();
    let (m, k) = (128, 6);
    let calls = residual_potential_calls(m, k, 805).unwrap();
    let passed = failures == 0 && unit <= 1e-12 && calls == (2 * m * k) as u64;
    report(
        8,
        passed,
        &format!("push(0) mismatches {failures}/10000, |E[1] - 1| {unit:.1e} (<= 1e-12), V calls {calls} (2MK = {})", 2 * m * k),
    );
    assert!(passed);
}

fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            let bytes = match p.extension().and_then(|e| e.to_str()) {
                Some("csv") => strip_timestamp(std::str::from_utf8(&bytes).unwrap()).into_bytes(),
                _ => bytes,
            };
            (p.file_name().unwrap().into(), bytes)
        })
        .collect()
}

#[test]
fn criterion_9_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("harmonic-coherent-1d").unwrap();
    cfg.run.epochs = 12;
    cfg.run.batch_size = 256;
    cfg.network.hidden = vec![16, 16];
    cfg.train.eval_every = 5;
    cfg.train.checkpoint_every = 4;
    cfg.train.moment_samples = 2_000;
    cfg.evaluate.samples = 2_000;
    cfg.oracle.nodes = 128;
    cfg.oracle.dt = 1e-3;
    cfg.oracle.duration = Some(1.0);
    cfg.oracle.tests = 4;
    let config = dir.path().join("experiment.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    let commands: [&[&str]; 6] = [
        &["verify"],
        &["train"],
        &["evaluate"],
        &["oracle", "equivalence-sweep"],
        &["oracle", "evolve"],
        &["oracle", "wigner"],
    ];
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for cmd in commands {
            let mut args = vec![
                "--config",
                path_str(&config),
                "--out",
                path_str(&out),
                "--threads",
                "1",
            ];
            args.extend_from_slice(cmd);
            let o = wigner(&args);
            assert!(
                o.status.success(),
                "{cmd:?}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        runs.push(outputs(&out));
    }
    let names: Vec<_> = runs[0]
        .iter()
        .map(|(n, _)| n.display().to_string())
        .collect();
    let differing: Vec<_> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.display().to_string())
        .collect();
    let passed = runs[0].len() == runs[1].len() && differing.is_empty() && names.len() >= 12;
    report(
        9,
        passed,
        &format!(
            "{} output files over {} commands, differing: {differing:?}",
            names.len(),
            commands.len()
        ),
    );
    assert!(passed, "{names:?}");
}
