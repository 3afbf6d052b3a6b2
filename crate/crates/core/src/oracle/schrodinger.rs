//! Strang split-step propagation of the 1D Schrödinger equation.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_dim, Result, WignerError};
use crate::potentials::Potential;

use super::grid::{Axis, WaveFunctionGrid};

/// Largest allowed per-step relative norm change.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// `(m omega / (pi hbar))^(1/4) exp(-m omega (x - x0)^2 / (2 hbar) + i p0 x / hbar)`.
pub fn coherent_wave(
    x: Axis,
    x0: f64,
    p0: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
) -> Result<WaveFunctionGrid> {
    let s = mass * omega / hbar;
    let c = (s / std::f64::consts::PI).powf(0.25);
    WaveFunctionGrid::from_fn(x, |u| {
        Complex64::from_polar(c * (-0.5 * s * (u - x0).powi(2)).exp(), p0 * u / hbar)
    })
}

/// First excited harmonic-oscillator eigenfunction.
pub fn first_excited_wave(x: Axis, mass: f64, omega: f64, hbar: f64) -> Result<WaveFunctionGrid> {
    let s = mass * omega / hbar;
    let c = (s / std::f64::consts::PI).powf(0.25) * std::f64::consts::SQRT_2;
    WaveFunctionGrid::from_fn(x, |u| {
        let xi = u * s.sqrt();
        Complex64::new(c * xi * (-0.5 * xi * xi).exp(), 0.0)
    })
}

/// Propagates `psi0` by `steps` steps of size `dt`; `observe(step, psi)` sees
/// the initial state and the state after every step.
pub fn split_step_observed(
    psi0: &WaveFunctionGrid,
    v: &dyn Potential<f64>,
    hbar: f64,
    mass: f64,
    dt: f64,
    steps: usize,
    mut observe: impl FnMut(usize, &WaveFunctionGrid) -> Result<()>,
) -> Result<WaveFunctionGrid> {
    check_dim("split-step potential", 1, v.dim())?;
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(WignerError::NonPositiveConstant("hbar"));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(WignerError::NonPositiveConstant("mass"));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(WignerError::NonFinite("time step"));
    }
    let mut psi = psi0.clone();
    observe(0, &psi)?;
    if dt == 0.0 || steps == 0 {
        return Ok(psi);
    }

    let axis = psi.x;
    let n = axis.n;
    let dk = 2.0 * std::f64::consts::PI / axis.length();
    let k_max = dk * (n / 2) as f64;
    let max_phase = dt * hbar * k_max * k_max / (2.0 * mass);
    if max_phase >= std::f64::consts::PI {
        return Err(WignerError::Aliasing(max_phase));
    }

    let mut half_v = Vec::with_capacity(n);
    for i in 0..n {
        let x = axis.node(i);
        let vx = v.eval(&[x]);
        if !vx.is_finite() {
            return Err(WignerError::NonFinitePotential(vec![x]));
        }
        half_v.push(Complex64::from_polar(1.0, -vx * dt / (2.0 * hbar)));
    }
    let inv_n = 1.0 / n as f64;
    let kinetic: Vec<Complex64> = (0..n)
        .map(|k| {
            let l = if k <= n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            let kk = l * dk;
            Complex64::from_polar(inv_n, -hbar * kk * kk * dt / (2.0 * mass))
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut norm = psi.norm();
    for step in 1..=steps {
        for (a, h) in psi.values.iter_mut().zip(&half_v) {
            *a *= h;
        }
        forward.process(&mut psi.values);
        for (a, k) in psi.values.iter_mut().zip(&kinetic) {
            *a *= k;
        }
        inverse.process(&mut psi.values);
        for (a, h) in psi.values.iter_mut().zip(&half_v) {
            *a *= h;
        }
        let next = psi.norm();
        let drift = (next - norm).abs() / norm;
        if !(drift <= NORM_TOLERANCE) {
            return Err(WignerError::NormDrift(drift));
        }
        norm = next;
        observe(step, &psi)?;
    }
    Ok(psi)
}

pub fn split_step_evolve(
    psi0: &WaveFunctionGrid,
    v: &dyn Potential<f64>,
    hbar: f64,
    mass: f64,
    dt: f64,
    steps: usize,
) -> Result<WaveFunctionGrid> {
    split_step_observed(psi0, v, hbar, mass, dt, steps, |_, _| Ok(()))
}
