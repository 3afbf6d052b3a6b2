//! Discrete Wigner transform of a wave function on the x-grid.
//!
//! The shift `y` runs over even multiples of the spacing so that `x +- y/2`
//! stay on the grid:
//!
//! ```text
//! f(x_i, p) = dx / (pi hbar) * [ c_0 + 2 sum_{k>0} Re(c_k e^{2 i p k dx / hbar}) ]
//! c_k = conj(psi_{i+k}) psi_{i-k}
//! ```
//!
//! with `psi` taken as zero outside the grid.

use num_complex::Complex64;

use crate::error::{Result, WignerError};

use super::grid::{Axis, GridField, WaveFunctionGrid};

pub const WAVE_EDGE_TOLERANCE: f64 = 1e-10;

pub fn wigner_transform(psi: &WaveFunctionGrid, hbar: f64, p: Axis) -> Result<GridField> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(WignerError::NonPositiveConstant("hbar"));
    }
    let edge = psi.edge_max();
    if edge > WAVE_EDGE_TOLERANCE {
        return Err(WignerError::EdgeDecay(edge));
    }
    let xa = psi.x;
    let n = xa.n;
    let dx = xa.step();
    let half = n / 2 + 1;
    // table[k][j] = e^{2 i p_j k dx / hbar}
    let table: Vec<Complex64> = (0..half)
        .flat_map(|k| {
            (0..p.n)
                .map(move |j| Complex64::from_polar(1.0, 2.0 * p.node(j) * k as f64 * dx / hbar))
        })
        .collect();
    let scale = dx / (std::f64::consts::PI * hbar);
    let psi = &psi.values;
    let mut values = vec![0.0; n * p.n];
    let mut coeffs = Vec::with_capacity(half);
    for (i, row) in values.chunks_mut(p.n).enumerate() {
        coeffs.clear();
        let reach = i.min(n - 1 - i);
        for k in 0..=reach {
            coeffs.push(psi[i + k].conj() * psi[i - k]);
        }
        let c0 = coeffs[0].re;
        for (j, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, c) in coeffs.iter().enumerate().skip(1) {
                let e = table[k * p.n + j];
                acc += c.re * e.re - c.im * e.im;
            }
            *out = scale * (c0 + 2.0 * acc);
        }
    }
    GridField::new(xa, p, values)
}
