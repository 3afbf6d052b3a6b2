//! Time-resolved grid reference: Wigner snapshots of a split-step run and the
//! weak-form residual they leave.

use crate::error::{check_dim, Result, WignerError};
use crate::potentials::{potential_difference, Potential};
use crate::testfuncs::TestFunction;

use super::grid::{Axis, GridField, WaveFunctionGrid};
use super::schrodinger::split_step_observed;
use super::theta::integrate_against_sin;
use super::wigner::wigner_transform;

/// Wigner functions at `t = 0, every dt, 2 every dt, ...` up to `steps dt`.
#[allow(clippy::too_many_arguments)]
pub fn wigner_snapshots(
    psi0: &WaveFunctionGrid,
    v: &dyn Potential<f64>,
    hbar: f64,
    mass: f64,
    dt: f64,
    steps: usize,
    every: usize,
    p: Axis,
) -> Result<Vec<GridField>> {
    if every == 0 || !steps.is_multiple_of(every) {
        return Err(WignerError::InvalidGrid(format!(
            "{steps} steps not divisible by {every}"
        )));
    }
    let mut out = Vec::with_capacity(steps / every + 1);
    split_step_observed(psi0, v, hbar, mass, dt, steps, |s, psi| {
        if s % every == 0 {
            out.push(wigner_transform(psi, hbar, p)?);
        }
        Ok(())
    })?;
    Ok(out)
}

/// `int f (kappa + w_x p / m - D) cos(phase) dx dp` at time `t`.
pub fn bulk_integral(
    v: &dyn Potential<f64>,
    f: &GridField,
    tf: &TestFunction<f64>,
    hbar: f64,
    mass: f64,
    t: f64,
) -> Result<f64> {
    check_dim("grid test function", 1, tf.dim())?;
    let (xa, pa) = (f.x_axis(), f.p_axis());
    let mut acc = 0.0;
    for i in 0..xa.n {
        let x = xa.node(i);
        let d = potential_difference(v, &[x], &tf.w_p, hbar)?;
        for (j, &fv) in f.row(i).iter().enumerate() {
            let p = pa.node(j);
            let amp = tf.kappa + tf.w_x[0] * p / mass - d;
            acc += fv * amp * tf.phase_at(t, &[x], &[p]).cos();
        }
    }
    Ok(acc * f.cell())
}

/// `E_T[sin] - E_0[sin] - int_0^T bulk dt` from equally spaced snapshots,
/// Simpson's rule in time (needs an even number of intervals).
pub fn grid_weak_residual(
    snapshots: &[GridField],
    dt: f64,
    v: &dyn Potential<f64>,
    tf: &TestFunction<f64>,
    hbar: f64,
    mass: f64,
) -> Result<f64> {
    let intervals = snapshots.len().saturating_sub(1);
    if intervals == 0 || !intervals.is_multiple_of(2) {
        return Err(WignerError::InvalidGrid(format!(
            "Simpson's rule needs an even number of intervals, got {intervals}"
        )));
    }
    let horizon = dt * intervals as f64;
    let mut integral = 0.0;
    for (s, f) in snapshots.iter().enumerate() {
        let w = if s == 0 || s == intervals {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += w * bulk_integral(v, f, tf, hbar, mass, s as f64 * dt)?;
    }
    integral *= dt / 3.0;
    let end = integrate_against_sin(&snapshots[intervals], tf, horizon)?;
    let start = integrate_against_sin(&snapshots[0], tf, 0.0)?;
    Ok(end - start - integral)
}
