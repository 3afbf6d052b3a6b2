//! The named invariant checks behind `wigner verify`. Each check measures one
//! number and compares it against a fixed limit; the measuring functions are
//! public so the acceptance tests can reuse them with other arguments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use wigner_core::network::Activation;
use wigner_core::oracle::{
    coherent_wave, equivalence_sweep, first_excited_wave, grid_weak_residual, split_step_evolve,
    theta_apply, theta_apply_truncated, wigner_snapshots, wigner_transform, AnalyticSolution, Axis,
    SweepSettings, SweepState,
};
use wigner_core::phase::{PhasePoint, PhysicalConstants};
use wigner_core::potentials::{
    moyal_truncated_term, potential_difference, CountingPotential, FdSteps, MoyalOrder, Opaque,
    Potential, PotentialKind,
};
use wigner_core::pushforward::{
    sample_batch, signed_expectation, Branch, FrozenFlow, NetworkShape, SignedGenerator,
};
use wigner_core::residual::{
    bulk_expectation, estimate_residual, loss_and_gradients, sample_times, BulkTerm,
    ResidualSettings, TimeSampling,
};
use wigner_core::testfuncs::{init_test_set, TestScales};
use wigner_core::{
    InitialDecomposition, LibraryPotential, SignedPushforward, StreamRng, TestFunction,
    TestFunctionSet,
};

use crate::error::CliError;

type Res<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit: format!("<= {limit:e}"),
            detail: String::new(),
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            passed: (lo..=hi).contains(&value),
            value,
            limit: format!("in [{lo}, {hi}]"),
            detail: String::new(),
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn lib(name: &str) -> LibraryPotential {
    LibraryPotential::from_name(name, &[], 1).expect("library potential")
}

fn coherent() -> InitialDecomposition {
    InitialDecomposition::coherent(vec![1.0], vec![0.5], 1.0, 1.0, 1.0).expect("coherent state")
}

fn first_excited() -> InitialDecomposition {
    InitialDecomposition::first_excited(1, 1.0, 1.0, 1.0).expect("first excited state")
}

fn free_flow() -> FrozenFlow<AnalyticSolution> {
    FrozenFlow {
        flow: AnalyticSolution::Free { mass: 1.0 },
        dim: 1,
    }
}

fn harmonic_flow() -> FrozenFlow<AnalyticSolution> {
    FrozenFlow {
        flow: AnalyticSolution::Harmonic {
            mass: 1.0,
            omega: 1.0,
        },
        dim: 1,
    }
}

fn test_set(k: usize, seed: u64) -> Res<TestFunctionSet> {
    Ok(init_test_set(
        k,
        1,
        &TestScales::default(),
        &mut StreamRng::new(seed),
    )?)
}

/// Worst relative gap between the operator and shifted-difference integrals
/// over the sweep.
pub fn sweep_worst_gap(settings: &SweepSettings) -> Res<(f64, usize)> {
    let cases = equivalence_sweep(settings)?;
    let worst = cases.iter().map(|c| c.gap).fold(0.0, f64::max);
    Ok((worst, cases.len()))
}

/// `|potential_difference - V'(x) w|` for `V = cos x` at each `hbar`.
pub fn classical_limit_errors(hbars: &[f64]) -> Res<Vec<f64>> {
    let (v0, k0) = (1.0, 1.0);
    let v = LibraryPotential::new(PotentialKind::Cosine { v0, k0 }, 1)?;
    let probes = [(0.7, 1.3), (-1.1, 0.6), (2.3, -0.9)];
    hbars
        .iter()
        .map(|&h| {
            let mut worst: f64 = 0.0;
            for &(x, w) in &probes {
                let exact = -v0 * k0 * (k0 * x).sin() * w;
                worst = worst.max((potential_difference(&v, &[x], &[w], h)? - exact).abs());
            }
            Ok(worst)
        })
        .collect()
}

/// Worst relative gap between the shifted difference and the third-order
/// expansion over random polynomials of the given degree.
pub fn moyal_termination_gap(degree: usize, cases: usize, seed: u64) -> Res<f64> {
    let mut rng = StreamRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let coeffs: Vec<f64> = (0..=degree).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let v = LibraryPotential::new(PotentialKind::Polynomial { coeffs }, 1)?;
        let (x, w, h) = (
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(-2.0, 2.0),
            rng.uniform_in(0.1, 2.0),
        );
        let d = potential_difference(&v, &[x], &[w], h)?;
        let m = moyal_truncated_term(&v, &[x], &[w], h, MoyalOrder::Third, FdSteps::default())?;
        worst = worst.max((d - m).abs() / d.abs().max(1.0));
    }
    Ok(worst)
}

/// L2 distance between the exact and third-order truncated operators applied
/// to the Gaussian grid state, for `V = cos x`.
pub fn cosine_truncation_errors(hbars: &[f64]) -> Res<Vec<f64>> {
    let v = lib("cosine");
    let f = SweepState::Gaussian.grid(8.0, 256)?;
    hbars
        .iter()
        .map(|&h| {
            let exact = theta_apply(&v, &f, h)?;
            let trunc = theta_apply_truncated(&v, &f, h, MoyalOrder::Third, FdSteps::default())?;
            Ok(exact.l2_distance(&trunc)?)
        })
        .collect()
}

fn tiny_generator(
    decomp: &InitialDecomposition,
    frozen: bool,
    seed: u64,
) -> Res<SignedPushforward> {
    let shape = NetworkShape {
        hidden: vec![6],
        activation: Activation::Tanh,
        noise_dim: Some(2),
    };
    let mut sp = SignedPushforward::new(1, &shape, decomp.alpha0(), frozen, &StreamRng::new(seed))?;
    let mut rng = StreamRng::new(seed + 100);
    for branch in [Branch::Plus, Branch::Minus] {
        let n = sp.net(branch).num_params();
        let flat: Vec<f64> = (0..n).map(|_| rng.uniform_in(-0.5, 0.5)).collect();
        sp.net_mut(branch).set_flat(&flat)?;
    }
    Ok(sp)
}

/// Worst relative mismatch between reverse-mode gradients and central
/// differences of the same objective (common random numbers), on `N = 1`,
/// `M = 32`, `K = 2`. Each parameter group is scaled by its largest gradient.
pub fn gradient_mismatch(decomp: &InitialDecomposition, frozen: bool) -> Res<(f64, usize)> {
    let v = LibraryPotential::new(
        PotentialKind::Quartic {
            mass: 1.0,
            omega: 1.0,
            lambda: 0.3,
        },
        1,
    )?;
    let consts = PhysicalConstants::natural(1);
    let tfs = init_test_set(
        2,
        1,
        &TestScales {
            x: 1.5,
            p: 1.5,
            kappa: 1.5,
        },
        &mut StreamRng::new(17),
    )?;
    let settings = ResidualSettings::new(0.8, 32);
    let rng = StreamRng::new(23);
    let sp = tiny_generator(decomp, frozen, 5)?;
    let (_, grads) = loss_and_gradients(&sp, decomp, &tfs, &v, &consts, &settings, &rng)?;
    let objective = |sp: &SignedPushforward, tfs: &TestFunctionSet| -> Res<f64> {
        Ok(estimate_residual(sp, decomp, tfs, &v, &consts, &settings, &rng)?.objective)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut params = 0;
    let mut compare = |analytic: &[f64], numeric: &[f64]| {
        let scale = analytic.iter().fold(1e-8f64, |a, g| a.max(g.abs()));
        for (a, n) in analytic.iter().zip(numeric) {
            worst = worst.max((a - n).abs() / scale);
        }
        params += analytic.len();
    };
    for branch in [Branch::Plus, Branch::Minus] {
        let analytic = match branch {
            Branch::Plus => &grads.plus,
            Branch::Minus => &grads.minus,
        };
        let flat = sp.net(branch).to_flat();
        let mut numeric = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut f = flat.clone();
            f[i] += h;
            let mut hi = sp.clone();
            hi.net_mut(branch).set_flat(&f)?;
            f[i] -= 2.0 * h;
            let mut lo = sp.clone();
            lo.net_mut(branch).set_flat(&f)?;
            numeric.push((objective(&hi, &tfs)? - objective(&lo, &tfs)?) / (2.0 * h));
        }
        compare(analytic, &numeric);
    }
    if !frozen {
        let (mut hi, mut lo) = (sp.clone(), sp.clone());
        hi.alpha_raw += h;
        lo.alpha_raw -= h;
        let numeric = (objective(&hi, &tfs)? - objective(&lo, &tfs)?) / (2.0 * h);
        compare(&[grads.alpha_raw], &[numeric]);
    }
    let flat = tfs.to_flat();
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut f = flat.clone();
        f[i] += h;
        let mut hi = tfs.clone();
        hi.set_flat(&f)?;
        f[i] -= 2.0 * h;
        let mut lo = tfs.clone();
        lo.set_flat(&f)?;
        numeric.push((objective(&sp, &hi)? - objective(&sp, &lo)?) / (2.0 * h));
    }
    compare(&grads.tests, &numeric);
    Ok((worst, params))
}

/// Largest `|R_k| / SE_k` with an exact flow frozen in place of the networks.
pub fn frozen_residual_ratio<G: SignedGenerator<f64>>(
    gen: &G,
    v: &dyn Potential<f64>,
    horizon: f64,
    m: usize,
    k: usize,
    seed: u64,
) -> Res<f64> {
    let consts = PhysicalConstants::natural(1);
    let tfs = test_set(k, seed)?;
    let settings = ResidualSettings::new(horizon, m);
    let est = estimate_residual(
        gen,
        &coherent(),
        &tfs,
        v,
        &consts,
        &settings,
        &StreamRng::new(seed + 1),
    )?;
    Ok(est
        .per_test
        .iter()
        .zip(est.std_errors())
        .map(|(r, se)| r.abs() / se)
        .fold(0.0, f64::max))
}

/// Mean standard error of the residuals of the frozen free flow at each batch
/// size.
pub fn frozen_standard_errors(sizes: &[usize], k: usize, seed: u64) -> Res<Vec<f64>> {
    let consts = PhysicalConstants::natural(1);
    let tfs = test_set(k, seed)?;
    let v = lib("free");
    sizes
        .iter()
        .map(|&m| {
            let settings = ResidualSettings::new(1.0, m);
            let est = estimate_residual(
                &free_flow(),
                &coherent(),
                &tfs,
                &v,
                &consts,
                &settings,
                &StreamRng::new(seed + 1),
            )?;
            Ok(est.std_errors().iter().sum::<f64>() / k as f64)
        })
        .collect()
}

/// Largest gap between the uniform-time estimate of `int_0^T E[bulk] dt` and a
/// 64-node Gauss-Legendre rule in `t`, in units of the combined standard
/// error.
pub fn time_integral_ratio(m: usize, per_node: usize, seed: u64) -> Res<f64> {
    let consts = PhysicalConstants::natural(1);
    let v = lib("quartic");
    let gen = harmonic_flow();
    let decomp = coherent();
    let horizon = 1.3;
    let tfs = test_set(4, seed)?;
    let settings = ResidualSettings::new(horizon, m);
    let root = StreamRng::new(seed);
    let times = sample_times(horizon, m, TimeSampling::Uniform, &mut root.split(1));
    let (mc, mc_se) = bulk_expectation(
        &gen,
        &decomp,
        &tfs,
        &v,
        &consts,
        &settings,
        &times,
        &root.split(2),
    )?;
    let rule =
        gauss_quad::GaussLegendre::new(64).map_err(|e| CliError::Verification(e.to_string()))?;
    let mut quad = vec![0.0; tfs.len()];
    let mut quad_var = vec![0.0; tfs.len()];
    for (j, &(node, weight)) in rule.as_node_weight_pairs().iter().enumerate() {
        let t = 0.5 * horizon * (node + 1.0);
        let w = 0.5 * horizon * weight;
        let at = vec![t; per_node];
        let (mean, se) = bulk_expectation(
            &gen,
            &decomp,
            &tfs,
            &v,
            &consts,
            &settings,
            &at,
            &root.derive(&[3, j as u64]),
        )?;
        for k in 0..tfs.len() {
            quad[k] += w * mean[k];
            quad_var[k] += (w * se[k]).powi(2);
        }
    }
    Ok((0..tfs.len())
        .map(|k| {
            let est = horizon * mc[k];
            let se = ((horizon * mc_se[k]).powi(2) + quad_var[k]).sqrt();
            (est - quad[k]).abs() / se
        })
        .fold(0.0, f64::max))
}

/// Largest `|R_exact - R_classical|` at small `hbar` on a frozen generator
/// with common random numbers.
pub fn classical_mode_gap(hbar: f64, m: usize, seed: u64) -> Res<f64> {
    let consts = PhysicalConstants {
        hbar,
        mass: 1.0,
        dim: 1,
    };
    let v = lib("quartic");
    let tfs = test_set(8, seed)?;
    let mut settings = ResidualSettings::new(1.0, m);
    let rng = StreamRng::new(seed + 1);
    let exact = estimate_residual(
        &harmonic_flow(),
        &coherent(),
        &tfs,
        &v,
        &consts,
        &settings,
        &rng,
    )?;
    settings.bulk_term = BulkTerm::Classical;
    let classical = estimate_residual(
        &harmonic_flow(),
        &coherent(),
        &tfs,
        &v,
        &consts,
        &settings,
        &rng,
    )?;
    Ok(exact
        .per_test
        .iter()
        .zip(&classical.per_test)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Largest pointwise gap of the x and p marginals of a coherent-state Wigner
/// function against `|psi|^2` and `|psi_hat|^2`.
pub fn marginal_gap() -> Res<f64> {
    let hbar = 0.7;
    let axis = Axis::new(-8.0, 8.0, 256)?;
    let psi = coherent_wave(axis, 0.4, -0.6, 1.3, 0.9, hbar)?;
    let f = wigner_transform(&psi, hbar, axis)?;
    let gap_x = f
        .marginal_x()
        .iter()
        .zip(&psi.density())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let amp = psi.momentum_amplitude(hbar, &axis.nodes());
    let gap_p = f
        .marginal_p()
        .iter()
        .zip(&amp)
        .map(|(a, b)| (a - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    Ok(gap_x.max(gap_p))
}

/// Negative volume of the first excited harmonic Wigner function on a
/// `[-8, 8]^2` grid with `n` nodes per axis.
pub fn first_excited_negative_volume_on(n: usize) -> Res<f64> {
    let axis = Axis::new(-8.0, 8.0, n)?;
    let psi = first_excited_wave(axis, 1.0, 1.0, 1.0)?;
    Ok(wigner_transform(&psi, 1.0, axis)?.negative_volume())
}

/// Number of probes for which `push(t = 0)` is not bit-identical to its input.
pub fn push_identity_failures(probes: usize, seed: u64) -> Res<usize> {
    let decomp = first_excited();
    let sp = SignedPushforward::new(
        1,
        &NetworkShape::default(),
        decomp.alpha0(),
        false,
        &StreamRng::new(seed),
    )?;
    let mut rng = StreamRng::new(seed + 1);
    let mut failures = 0;
    for i in 0..probes {
        let init = PhasePoint::new(
            vec![rng.uniform_in(-6.0, 6.0)],
            vec![rng.uniform_in(-6.0, 6.0)],
        )?;
        let z: Vec<f64> = (0..sp.noise_dim())
            .map(|_| rng.uniform_in(-4.0, 4.0))
            .collect();
        let branch = if i % 2 == 0 {
            Branch::Plus
        } else {
            Branch::Minus
        };
        if sp.push(branch, 0.0, &init, &z)? != init {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Largest `|E[1] - 1|` of the signed estimator over several mixing weights.
pub fn signed_unit_gap(alpha_raws: &[f64], m: usize, seed: u64) -> Res<f64> {
    let decomp = first_excited();
    let mut sp = SignedPushforward::new(
        1,
        &NetworkShape::default(),
        decomp.alpha0(),
        false,
        &StreamRng::new(seed),
    )?;
    let mut worst: f64 = 0.0;
    for (i, &raw) in alpha_raws.iter().enumerate() {
        sp.alpha_raw = raw;
        let times = sample_times(
            1.0,
            m,
            TimeSampling::Uniform,
            &mut StreamRng::new(seed + i as u64),
        );
        let s = sample_batch(&sp, &decomp, &times, &StreamRng::new(seed + 100 + i as u64))?;
        let one: f64 =
            signed_expectation(&s.plus, &s.minus, s.alpha_plus, s.alpha_minus, |_, _, _| {
                1.0
            })?;
        worst = worst.max((one - 1.0).abs());
    }
    Ok(worst)
}

/// Potential evaluations spent by one residual estimate through the
/// non-separable path with the mixing weight frozen at zero.
pub fn residual_potential_calls(m: usize, k: usize, seed: u64) -> Res<u64> {
    let decomp = coherent();
    let sp = SignedPushforward::new(
        1,
        &NetworkShape::default(),
        0.0,
        true,
        &StreamRng::new(seed),
    )?;
    let v = CountingPotential::new(Opaque(lib("harmonic")));
    let tfs = test_set(k, seed)?;
    let consts = PhysicalConstants::natural(1);
    let settings = ResidualSettings::new(1.0, m);
    estimate_residual(
        &sp,
        &decomp,
        &tfs,
        &v,
        &consts,
        &settings,
        &StreamRng::new(seed + 1),
    )?;
    Ok(v.eval_calls())
}

/// `(norm drift, |variance - closed form|)` for a free Gaussian packet.
pub fn free_spreading_errors() -> Res<(f64, f64)> {
    let axis = Axis::new(-16.0, 16.0, 512)?;
    let psi = coherent_wave(axis, 0.0, 0.0, 1.0, 1.0, 1.0)?;
    let (_, var0) = psi.position_moments();
    let (hbar, mass, dt, steps) = (1.0, 1.0, 1e-3, 2000);
    let out = split_step_evolve(&psi, &lib("free"), hbar, mass, dt, steps)?;
    let t = dt * steps as f64;
    let (_, var) = out.position_moments();
    let expect = var0 + (hbar * t / (2.0 * mass * var0.sqrt())).powi(2);
    Ok(((out.norm() - psi.norm()).abs(), (var - expect).abs()))
}

/// L2 distance between the Wigner functions before and after one period in
/// the unit harmonic well.
pub fn harmonic_period_distance(steps: usize) -> Res<f64> {
    let axis = Axis::new(-8.0, 8.0, 256)?;
    let psi = coherent_wave(axis, 1.0, 0.0, 1.0, 1.0, 1.0)?;
    let dt = 2.0 * PI / steps as f64;
    let out = split_step_evolve(&psi, &lib("harmonic"), 1.0, 1.0, dt, steps)?;
    let f0 = wigner_transform(&psi, 1.0, axis)?;
    let f1 = wigner_transform(&out, 1.0, axis)?;
    Ok(f0.l2_distance(&f1)?)
}

/// Largest weak-form residual of split-step Wigner snapshots.
pub fn grid_weak_residual_max(potential: &str) -> Res<f64> {
    let v = lib(potential);
    let axis = Axis::new(-8.0, 8.0, 256)?;
    let psi = coherent_wave(axis, 1.0, 0.5, 1.0, 1.0, 1.0)?;
    let (dt, steps, every) = (5e-4, 2000, 50);
    let snaps = wigner_snapshots(&psi, &v, 1.0, 1.0, dt, steps, every, axis)?;
    let tfs = [
        TestFunction::new(vec![1.0], vec![1.0], 0.0, 0.0)?,
        TestFunction::new(vec![-0.6], vec![1.7], 1.2, 0.4)?,
        TestFunction::new(vec![1.9], vec![-0.8], -0.5, 2.0)?,
    ];
    let mut worst: f64 = 0.0;
    for tf in &tfs {
        worst = worst.max(grid_weak_residual(&snaps, dt * every as f64, &v, tf, 1.0, 1.0)?.abs());
    }
    Ok(worst)
}

/// Relative L2 gap between the operator for `V = x^2/2` and `-x df/dp`
/// computed spectrally.
pub fn harmonic_force_gap() -> Res<f64> {
    let f = SweepState::Gaussian.grid(8.0, 256)?;
    let tf = theta_apply(&lib("harmonic"), &f, 1.0)?;
    let n = f.p_axis().n;
    let len = f.p_axis().length();
    let mut expect = Vec::with_capacity(f.values().len());
    for i in 0..f.x_axis().n {
        let x = f.x_axis().node(i);
        expect.extend(
            spectral_derivative(f.row(i), len)
                .into_iter()
                .map(|d| -x * d),
        );
    }
    debug_assert_eq!(expect.len(), f.x_axis().n * n);
    let num: f64 = tf
        .values()
        .iter()
        .zip(&expect)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = expect.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

/// Derivative of a periodic sample row by its Fourier series (direct sums;
/// rows are short).
fn spectral_derivative(row: &[f64], length: f64) -> Vec<f64> {
    let n = row.len();
    let mut out = vec![0.0; n];
    for k in 1..n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in row.iter().enumerate() {
            let a = -2.0 * PI * (k * j) as f64 / n as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        let omega = 2.0 * PI * k as f64 / length;
        for (j, o) in out.iter_mut().enumerate() {
            let a = 2.0 * PI * (k * j) as f64 / n as f64;
            // 2 Re[i omega c_k e^{i a}] / n
            *o += 2.0 * omega * (-re * a.sin() - im * a.cos()) / n as f64;
        }
    }
    out
}

pub type CheckFn = fn(&SweepSettings) -> Res<Check>;

/// Every check in report order.
pub fn all_checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("equivalence_sweep", |s| {
            let (gap, n) = sweep_worst_gap(s)?;
            Ok(Check::at_most("equivalence_sweep", gap, 1e-6).detail(format!("{n} cases")))
        }),
        ("classical_limit_slope", |_| {
            let hbars = [1e-1, 1e-2, 1e-3];
            let errs = classical_limit_errors(&hbars)?;
            Ok(Check::within(
                "classical_limit_slope",
                loglog_slope(&hbars, &errs),
                1.9,
                2.1,
            )
            .detail(format!("errors {errs:?}")))
        }),
        ("moyal_termination", |_| {
            let mut worst: f64 = 0.0;
            for degree in 0..=4 {
                worst = worst.max(moyal_termination_gap(degree, 100, 31 + degree as u64)?);
            }
            Ok(Check::at_most("moyal_termination", worst, 1e-8)
                .detail("polynomials of degree <= 4"))
        }),
        ("cosine_truncation_slope", |_| {
            let hbars = [1.0, 0.5, 0.25];
            let errs = cosine_truncation_errors(&hbars)?;
            Ok(Check::within(
                "cosine_truncation_slope",
                loglog_slope(&hbars, &errs),
                3.7,
                4.3,
            )
            .detail(format!("errors {errs:?}")))
        }),
        ("gradient_check", |_| {
            let (a, na) = gradient_mismatch(&coherent(), true)?;
            let (b, nb) = gradient_mismatch(&first_excited(), false)?;
            Ok(Check::at_most("gradient_check", a.max(b), 1e-4)
                .detail(format!("{} parameters", na + nb)))
        }),
        ("frozen_free_residual", |_| {
            let r = frozen_residual_ratio(&free_flow(), &lib("free"), 1.0, 10_000, 8, 41)?;
            Ok(
                Check::at_most("frozen_free_residual", r, 3.0)
                    .detail("max |R_k| / SE_k at M = 1e4"),
            )
        }),
        ("frozen_harmonic_residual", |_| {
            let r =
                frozen_residual_ratio(&harmonic_flow(), &lib("harmonic"), PI / 2.0, 10_000, 8, 43)?;
            Ok(Check::at_most("frozen_harmonic_residual", r, 3.0)
                .detail("max |R_k| / SE_k at M = 1e4"))
        }),
        ("standard_error_slope", |_| {
            let sizes = [1_000, 10_000, 100_000];
            let se = frozen_standard_errors(&sizes, 8, 47)?;
            let m: Vec<f64> = sizes.iter().map(|&m| m as f64).collect();
            Ok(
                Check::within("standard_error_slope", loglog_slope(&m, &se), -0.6, -0.4)
                    .detail(format!("SE {se:?}")),
            )
        }),
        ("time_integral_quadrature", |_| {
            let r = time_integral_ratio(20_000, 2_000, 53)?;
            Ok(Check::at_most("time_integral_quadrature", r, 3.0)
                .detail("gap / combined SE, 64-node Gauss-Legendre"))
        }),
        ("classical_mode_equivalence", |_| {
            let gap = classical_mode_gap(1e-4, 2_000, 59)?;
            Ok(Check::at_most("classical_mode_equivalence", gap, 1e-6)
                .detail("hbar = 1e-4, quartic V"))
        }),
        ("wigner_marginals", |_| {
            Ok(Check::at_most("wigner_marginals", marginal_gap()?, 1e-8))
        }),
        ("first_excited_negative_volume", |_| {
            let (a, b) = (
                first_excited_negative_volume_on(128)?,
                first_excited_negative_volume_on(256)?,
            );
            Ok(
                Check::at_most("first_excited_negative_volume", (a - b).abs(), 1e-3)
                    .detail(format!("128: {a:.6}, 256: {b:.6}")),
            )
        }),
        ("push_identity_at_zero", |_| {
            let fails = push_identity_failures(10_000, 61)?;
            Ok(Check::at_most("push_identity_at_zero", fails as f64, 0.0)
                .detail("10000 probes, bit-exact"))
        }),
        ("signed_expectation_of_one", |_| {
            let gap = signed_unit_gap(&[-6.0, -1.0, 0.0, 0.5, 4.0], 512, 67)?;
            Ok(Check::at_most("signed_expectation_of_one", gap, 1e-12))
        }),
        ("potential_call_count", |_| {
            let (m, k) = (64, 5);
            let calls = residual_potential_calls(m, k, 71)?;
            let expect = 2 * m * k;
            let mut c = Check::at_most(
                "potential_call_count",
                (calls as f64 - expect as f64).abs(),
                0.0,
            );
            c.detail = format!("{calls} calls, expected {expect}");
            Ok(c)
        }),
        ("split_step_norm", |_| {
            let (drift, _) = free_spreading_errors()?;
            Ok(Check::at_most("split_step_norm", drift, 1e-10))
        }),
        ("split_step_free_spreading", |_| {
            let (_, gap) = free_spreading_errors()?;
            Ok(Check::at_most("split_step_free_spreading", gap, 1e-8))
        }),
        ("harmonic_period_return", |_| {
            Ok(Check::at_most(
                "harmonic_period_return",
                harmonic_period_distance(64_000)?,
                1e-6,
            ))
        }),
        ("grid_weak_residual", |_| {
            let worst = grid_weak_residual_max("harmonic")?.max(grid_weak_residual_max("quartic")?);
            Ok(Check::at_most("grid_weak_residual", worst, 1e-4).detail("harmonic and quartic"))
        }),
        ("harmonic_force_operator", |_| {
            Ok(Check::at_most(
                "harmonic_force_operator",
                harmonic_force_gap()?,
                1e-8,
            ))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_derivative_of_a_sine() {
        let n = 64;
        let len = 2.0 * PI;
        let row: Vec<f64> = (0..n)
            .map(|j| (3.0 * len * j as f64 / n as f64).sin())
            .collect();
        let d = spectral_derivative(&row, len);
        for (j, v) in d.iter().enumerate() {
            let expect = 3.0 * (3.0 * len * j as f64 / n as f64).cos();
            assert!((v - expect).abs() < 1e-11, "{j}: {v} {expect}");
        }
    }

    #[test]
    fn check_names_are_unique_and_match() {
        let checks = all_checks();
        assert!(checks.len() >= 12);
        let mut names: Vec<_> = checks.iter().map(|(n, _)| *n).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), checks.len());
    }

    #[test]
    fn cheap_checks_pass() {
        let s = SweepSettings::default();
        for (name, f) in all_checks() {
            if matches!(
                name,
                "moyal_termination"
                    | "push_identity_at_zero"
                    | "signed_expectation_of_one"
                    | "potential_call_count"
            ) {
                let c = f(&s).unwrap();
                assert_eq!(c.name, name);
                assert!(c.passed, "{c:?}");
            }
        }
    }
}
