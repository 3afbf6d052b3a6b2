//! Grid evaluation of the nonlocal potential operator and of the two forms
//! of its weak integral.
//!
//! Conventions: with `n = n_p` and momentum spacing `dp`, the conjugate grid is
//! `y_l = l * 2 pi hbar / (n dp)` for `l = -n/2 .. n/2`, and the operator is
//!
//! ```text
//! (Theta f)(x, p_q) = (1 / (i hbar)) * IDFT_l[ dV(x, y_l) * DFT_j[f(x, p_j)] ]
//! dV(x, y) = V(x + y/2) - V(x - y/2)
//! ```
//!
//! with the unnormalized forward DFT and `1/n` on the inverse. The Nyquist
//! mode `l = -n/2` has no odd partner and is dropped.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_dim, Result, WignerError};
use crate::potentials::{
    moyal_truncated_term, potential_difference, FdSteps, MoyalOrder, Potential,
};
use crate::testfuncs::TestFunction;

use super::grid::GridField;

/// Edge-decay and realness thresholds for [`theta_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaTolerances {
    pub edge: f64,
    /// Largest imaginary part allowed, relative to `max(1, max |Re|)`.
    pub imaginary: f64,
}

impl Default for ThetaTolerances {
    fn default() -> Self {
        Self {
            edge: 1e-10,
            imaginary: 1e-8,
        }
    }
}

/// Result of a kernel application along with its discarded imaginary part.
#[derive(Debug, Clone)]
pub struct ThetaOutput {
    pub field: GridField,
    pub imaginary_residue: f64,
}

fn check_1d(v: &dyn Potential<f64>, hbar: f64) -> Result<()> {
    check_dim("grid oracle potential", 1, v.dim())?;
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(WignerError::NonPositiveConstant("hbar"));
    }
    Ok(())
}

/// Applies `(1/(i hbar)) K(x, y)` on the conjugate grid, where `kernel(x, ys)`
/// fills one row of `K` for all `y` at once.
fn apply_kernel(
    f: &GridField,
    hbar: f64,
    tol: ThetaTolerances,
    mut kernel: impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
) -> Result<ThetaOutput> {
    f.check_edge_decay(tol.edge)?;
    let (xa, pa) = (*f.x_axis(), *f.p_axis());
    let n = pa.n;
    let dy = 2.0 * std::f64::consts::PI * hbar / (n as f64 * pa.step());
    let ys: Vec<f64> = (0..n)
        .map(|k| {
            let l = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            l * dy
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut k_row = vec![0.0; n];
    let mut out = Vec::with_capacity(xa.n * n);
    let mut max_im: f64 = 0.0;
    let mut max_re: f64 = 0.0;
    let scale = 1.0 / (n as f64 * hbar);

    for i in 0..xa.n {
        for (b, &v) in buf.iter_mut().zip(f.row(i)) {
            *b = Complex64::new(v, 0.0);
        }
        forward.process(&mut buf);
        kernel(xa.node(i), &ys, &mut k_row)?;
        k_row[n / 2] = 0.0;
        for (b, &k) in buf.iter_mut().zip(&k_row) {
            *b *= k;
        }
        inverse.process(&mut buf);
        // (a + ib) / (i hbar) = (b - ia) / hbar
        for b in &buf {
            let re = b.im * scale;
            let im = -b.re * scale;
            max_re = max_re.max(re.abs());
            max_im = max_im.max(im.abs());
            out.push(re);
        }
    }
    if max_im > tol.imaginary * max_re.max(1.0) {
        return Err(WignerError::ImaginaryResidue(max_im));
    }
    Ok(ThetaOutput {
        field: GridField::new(xa, pa, out)?,
        imaginary_residue: max_im,
    })
}

/// The exact operator with kernel `V(x + y/2) - V(x - y/2)`.
pub fn theta_apply_with(
    v: &dyn Potential<f64>,
    f: &GridField,
    hbar: f64,
    tol: ThetaTolerances,
) -> Result<ThetaOutput> {
    check_1d(v, hbar)?;
    apply_kernel(f, hbar, tol, |x, ys, row| {
        for (r, &y) in row.iter_mut().zip(ys) {
            let d = v.eval(&[x + 0.5 * y]) - v.eval(&[x - 0.5 * y]);
            if !d.is_finite() {
                return Err(WignerError::NonFinitePotential(vec![x, y]));
            }
            *r = d;
        }
        Ok(())
    })
}

pub fn theta_apply(v: &dyn Potential<f64>, f: &GridField, hbar: f64) -> Result<GridField> {
    theta_apply_with(v, f, hbar, ThetaTolerances::default()).map(|o| o.field)
}

/// The operator with its kernel replaced by the truncated odd Taylor series
/// `V'(x) y + V'''(x) y^3 / 24` (or only the first term).
pub fn theta_apply_truncated(
    v: &dyn Potential<f64>,
    f: &GridField,
    hbar: f64,
    order: MoyalOrder,
    steps: FdSteps<f64>,
) -> Result<GridField> {
    check_1d(v, hbar)?;
    apply_kernel(f, hbar, ThetaTolerances::default(), |x, ys, row| {
        for (r, &y) in row.iter_mut().zip(ys) {
            *r = hbar * moyal_truncated_term(v, &[x], &[y / hbar], hbar, order, steps)?;
        }
        Ok(())
    })
    .map(|o| o.field)
}

/// Trapezoidal `int g(x, p) sin(phase(t, x, p)) dx dp`.
pub fn integrate_against_sin(g: &GridField, tf: &TestFunction<f64>, t: f64) -> Result<f64> {
    check_dim("grid test function", 1, tf.dim())?;
    Ok(g.integrate_with(|x, p| tf.phase_at(t, &[x], &[p]).sin()))
}

/// `int (Theta f) sin(phase) dx dp` at `t = 0`.
pub fn weak_integral_quadrature(
    v: &dyn Potential<f64>,
    f: &GridField,
    tf: &TestFunction<f64>,
    hbar: f64,
) -> Result<f64> {
    let theta = theta_apply(v, f, hbar)?;
    integrate_against_sin(&theta, tf, 0.0)
}

/// `int f D cos(phase) dx dp` at time `t`, where `D` is the shifted difference
/// quotient `[V(x + hbar w_p/2) - V(x - hbar w_p/2)] / hbar`.
pub fn reduced_integral_at(
    v: &dyn Potential<f64>,
    f: &GridField,
    tf: &TestFunction<f64>,
    hbar: f64,
    t: f64,
) -> Result<f64> {
    check_1d(v, hbar)?;
    check_dim("grid test function", 1, tf.dim())?;
    let (xa, pa) = (f.x_axis(), f.p_axis());
    let mut acc = 0.0;
    for i in 0..xa.n {
        let x = xa.node(i);
        let d = potential_difference(v, &[x], &tf.w_p, hbar)?;
        if d == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (j, &fv) in f.row(i).iter().enumerate() {
            row += fv * tf.phase_at(t, &[x], &[pa.node(j)]).cos();
        }
        acc += d * row;
    }
    Ok(acc * f.cell())
}

pub fn reduced_integral(
    v: &dyn Potential<f64>,
    f: &GridField,
    tf: &TestFunction<f64>,
    hbar: f64,
) -> Result<f64> {
    reduced_integral_at(v, f, tf, hbar, 0.0)
}

/// `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Spectral `d f / d p` along every row.
pub fn spectral_p_derivative(f: &GridField) -> Result<GridField> {
    let (xa, pa) = (*f.x_axis(), *f.p_axis());
    let n = pa.n;
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let dk = 2.0 * std::f64::consts::PI / pa.length();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(xa.n * n);
    for i in 0..xa.n {
        for (b, &v) in buf.iter_mut().zip(f.row(i)) {
            *b = Complex64::new(v, 0.0);
        }
        forward.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let l = if k < n / 2 {
                k as f64
            } else if k == n / 2 {
                0.0
            } else {
                k as f64 - n as f64
            };
            *b *= Complex64::new(0.0, l * dk);
        }
        inverse.process(&mut buf);
        out.extend(buf.iter().map(|b| b.re / n as f64));
    }
    GridField::new(xa, pa, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{FnPotential, LibraryPotential, PotentialKind};
    use std::f64::consts::PI;

    fn gaussian(n: usize) -> GridField {
        GridField::square(8.0, n, |x, p| {
            (-(x - 0.3).powi(2) - (p + 0.2).powi(2)).exp() / PI
        })
        .unwrap()
    }

    fn harmonic() -> LibraryPotential<f64> {
        LibraryPotential::new(
            PotentialKind::Harmonic {
                mass: 1.0,
                omega: 1.0,
            },
            1,
        )
        .unwrap()
    }

    fn quartic() -> LibraryPotential<f64> {
        LibraryPotential::new(
            PotentialKind::Quartic {
                mass: 1.0,
                omega: 1.0,
                lambda: 0.3,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_and_constant_potentials_give_zero() {
        let f = gaussian(64);
        for c in [0.0, 3.5] {
            let v = FnPotential::new(1, move |_: &[f64]| c);
            let out = theta_apply(&v, &f, 1.0).unwrap();
            assert!(out.values().iter().all(|&u| u == 0.0));
            let tf = TestFunction::new(vec![1.0], vec![1.0], 0.0, 0.0).unwrap();
            assert_eq!(weak_integral_quadrature(&v, &f, &tf, 1.0).unwrap(), 0.0);
            assert_eq!(reduced_integral(&v, &f, &tf, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn harmonic_matches_classical_force_term() {
        let f = gaussian(128);
        let v = harmonic();
        let theta = theta_apply(&v, &f, 1.0).unwrap();
        let dfdp = spectral_p_derivative(&f).unwrap();
        let xs = f.x_axis().nodes();
        let expect: Vec<f64> = dfdp
            .values()
            .chunks(f.p_axis().n)
            .zip(&xs)
            .flat_map(|(row, &x)| row.iter().map(move |d| -x * d))
            .collect();
        let expect = GridField::new(*f.x_axis(), *f.p_axis(), expect).unwrap();
        let rel = theta.l2_distance(&expect).unwrap() / expect.l2_norm();
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn weak_and_reduced_forms_agree() {
        let f = gaussian(256);
        let tf = TestFunction::new(vec![1.0], vec![1.0], 0.0, 0.0).unwrap();
        let a = weak_integral_quadrature(&harmonic(), &f, &tf, 1.0).unwrap();
        let b = reduced_integral(&harmonic(), &f, &tf, 1.0).unwrap();
        assert!(relative_gap(a, b) < 1e-6, "{a} {b}");
        let tf = TestFunction::new(vec![-0.7], vec![1.6], 0.4, 0.9).unwrap();
        let a = weak_integral_quadrature(&quartic(), &f, &tf, 1.0).unwrap();
        let b = reduced_integral(&quartic(), &f, &tf, 1.0).unwrap();
        assert!(relative_gap(a, b) < 1e-6, "{a} {b}");
    }

    #[test]
    fn parity_and_vanishing_w_p() {
        let f = GridField::square(8.0, 128, |x, p| (-(x * x) - p * p).exp() / PI).unwrap();
        let tf = TestFunction::new(vec![0.8], vec![1.1], 0.0, 0.0).unwrap();
        let w = weak_integral_quadrature(&quartic(), &f, &tf, 1.0).unwrap();
        assert!(w.abs() < 1e-12, "{w}");
        let tf = TestFunction::new(vec![0.8], vec![0.0], 0.0, 0.3).unwrap();
        assert_eq!(reduced_integral(&quartic(), &f, &tf, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn edge_violation_is_an_error() {
        let f = GridField::square(2.0, 32, |_, p| (-p * p).exp()).unwrap();
        assert!(matches!(
            theta_apply(&harmonic(), &f, 1.0),
            Err(WignerError::EdgeDecay(_))
        ));
    }

    #[test]
    fn truncated_operator_is_exact_for_quartic() {
        let f = gaussian(128);
        let exact = theta_apply(&quartic(), &f, 1.0).unwrap();
        let trunc =
            theta_apply_truncated(&quartic(), &f, 1.0, MoyalOrder::Third, FdSteps::default())
                .unwrap();
        let rel = exact.l2_distance(&trunc).unwrap() / exact.l2_norm();
        assert!(rel < 1e-7, "{rel}");
    }

    #[test]
    fn rejects_multidimensional_potentials() {
        let v = LibraryPotential::new(
            PotentialKind::Harmonic {
                mass: 1.0,
                omega: 1.0,
            },
            2,
        )
        .unwrap();
        assert!(theta_apply(&v, &gaussian(16), 1.0).is_err());
    }
}
