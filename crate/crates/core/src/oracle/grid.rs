//! Uniform periodic grids on 1D phase space and wave functions on them.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::checkpoint::{write_atomic, ByteReader, ByteWriter};
use crate::error::{Result, WignerError};

pub const GRID_MAGIC: &[u8; 8] = b"WGNGRID1";
pub const GRID_VERSION: u32 = 1;

/// `n` nodes `min + i (max - min) / n`; the right endpoint is the periodic
/// image of the left one and is not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(WignerError::InvalidGrid(format!(
                "bad range [{min}, {max}]"
            )));
        }
        if n < 2 {
            return Err(WignerError::InvalidGrid(format!("{n} nodes")));
        }
        Ok(Self { min, max, n })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }
}

/// Phase-space field on an `n_x x n_p` grid, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    x: Axis,
    p: Axis,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(x: Axis, p: Axis, values: Vec<f64>) -> Result<Self> {
        if !p.n.is_power_of_two() {
            return Err(WignerError::InvalidGrid(format!(
                "n_p = {} is not a power of two",
                p.n
            )));
        }
        if values.len() != x.n * p.n {
            return Err(WignerError::ShapeMismatch(format!(
                "{} values for a {} x {} grid",
                values.len(),
                x.n,
                p.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(WignerError::NonFinite("grid field"));
        }
        Ok(Self { x, p, values })
    }

    pub fn from_fn(x: Axis, p: Axis, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(x.n * p.n);
        for i in 0..x.n {
            let xi = x.node(i);
            for j in 0..p.n {
                values.push(f(xi, p.node(j)));
            }
        }
        Self::new(x, p, values)
    }

    /// Square grid `[-half, half)^2` with `n` nodes per side.
    pub fn square(half: f64, n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let axis = Axis::new(-half, half, n)?;
        Self::from_fn(axis, axis, f)
    }

    pub fn x_axis(&self) -> &Axis {
        &self.x
    }

    pub fn p_axis(&self) -> &Axis {
        &self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p.n..(i + 1) * self.p.n]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p.n + j]
    }

    pub fn cell(&self) -> f64 {
        self.x.step() * self.p.step()
    }

    /// Trapezoidal (periodic) quadrature of `g(x, p) f(x, p)`.
    pub fn integrate_with(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.x.n {
            let xi = self.x.node(i);
            for (j, &f) in self.row(i).iter().enumerate() {
                acc += f * g(xi, self.p.node(j));
            }
        }
        acc * self.cell()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    /// `int max(-f, 0)`.
    pub fn negative_volume(&self) -> f64 {
        self.values.iter().map(|&v| (-v).max(0.0)).sum::<f64>() * self.cell()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int f dp` at every x node.
    pub fn marginal_x(&self) -> Vec<f64> {
        let dp = self.p.step();
        (0..self.x.n)
            .map(|i| self.row(i).iter().sum::<f64>() * dp)
            .collect()
    }

    /// `int f dx` at every p node.
    pub fn marginal_p(&self) -> Vec<f64> {
        let dx = self.x.step();
        let mut out = vec![0.0; self.p.n];
        for i in 0..self.x.n {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out.iter().map(|v| v * dx).collect()
    }

    /// Largest `|f|` on the first and last row and column.
    pub fn edge_max(&self) -> f64 {
        let (nx, np) = (self.x.n, self.p.n);
        let mut m: f64 = 0.0;
        for j in 0..np {
            m = m.max(self.at(0, j).abs()).max(self.at(nx - 1, j).abs());
        }
        for i in 0..nx {
            m = m.max(self.at(i, 0).abs()).max(self.at(i, np - 1).abs());
        }
        m
    }

    pub fn check_edge_decay(&self, tol: f64) -> Result<()> {
        let m = self.edge_max();
        if m <= tol {
            Ok(())
        } else {
            Err(WignerError::EdgeDecay(m))
        }
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.x == other.x && self.p == other.p {
            Ok(())
        } else {
            Err(WignerError::ShapeMismatch(
                "fields live on different grids".into(),
            ))
        }
    }

    /// `(int (f - g)^2)^(1/2)`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let ss: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss * self.cell()).sqrt())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell()).sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(GRID_MAGIC);
        w.u32(GRID_VERSION);
        for axis in [&self.x, &self.p] {
            w.f64(axis.min);
            w.f64(axis.max);
            w.u64(axis.n as u64);
        }
        for &v in &self.values {
            w.f64(v);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect(GRID_MAGIC)?;
        let version = r.u32()?;
        if version != GRID_VERSION {
            return Err(WignerError::Format(format!(
                "unsupported grid version {version}"
            )));
        }
        let mut axes = Vec::with_capacity(2);
        for _ in 0..2 {
            let (min, max, n) = (r.f64()?, r.f64()?, r.u64()?);
            axes.push(Axis::new(min, max, n as usize)?);
        }
        let count = axes[0]
            .n
            .checked_mul(axes[1].n)
            .ok_or_else(|| WignerError::Format("grid too large".into()))?;
        let mut values = Vec::with_capacity(count.min(bytes.len() / 8));
        for _ in 0..count {
            values.push(r.f64()?);
        }
        r.finish()?;
        Self::new(axes[0], axes[1], values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// `x,p,f` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 64);
        out.push_str("x,p,f\n");
        for i in 0..self.x.n {
            let xi = self.x.node(i);
            for j in 0..self.p.n {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e}",
                    xi,
                    self.p.node(j),
                    self.at(i, j)
                );
            }
        }
        out
    }
}

/// Complex wave function on a periodic x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunctionGrid {
    pub x: Axis,
    pub values: Vec<Complex64>,
}

impl WaveFunctionGrid {
    pub fn new(x: Axis, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != x.n {
            return Err(WignerError::ShapeMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                x.n
            )));
        }
        if values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(WignerError::NonFinite("wave function"));
        }
        Ok(Self { x, values })
    }

    pub fn from_fn(x: Axis, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(x, x.nodes().into_iter().map(f).collect())
    }

    /// `sum |psi|^2 dx`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.x.step()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(WignerError::NonFinite("zero wave function"));
        }
        let s = 1.0 / n.sqrt();
        for v in &mut self.values {
            *v *= s;
        }
        Ok(self)
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Mean and variance of `|psi|^2`.
    pub fn position_moments(&self) -> (f64, f64) {
        let dx = self.x.step();
        let rho = self.density();
        let mean: f64 = rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * self.x.node(i))
            .sum::<f64>()
            * dx;
        let var: f64 = rho
            .iter()
            .enumerate()
            .map(|(i, r)| r * (self.x.node(i) - mean).powi(2))
            .sum::<f64>()
            * dx;
        (mean, var)
    }

    /// `<p>` from the discrete Fourier coefficients.
    pub fn mean_momentum(&self, hbar: f64) -> f64 {
        let n = self.x.n;
        let mut buf = self.values.clone();
        rustfft::FftPlanner::<f64>::new()
            .plan_fft_forward(n)
            .process(&mut buf);
        let dk = 2.0 * std::f64::consts::PI / self.x.length();
        let (mut num, mut den) = (0.0, 0.0);
        for (k, b) in buf.iter().enumerate() {
            let w = b.norm_sqr();
            let l = if k < n / 2 {
                k as f64
            } else if k == n / 2 {
                0.0
            } else {
                k as f64 - n as f64
            };
            num += w * hbar * l * dk;
            den += w;
        }
        num / den
    }

    /// `psi_hat(p) = (2 pi hbar)^(-1/2) sum psi(x) e^{-i p x / hbar} dx` at
    /// each requested momentum.
    pub fn momentum_amplitude(&self, hbar: f64, p: &[f64]) -> Vec<Complex64> {
        let dx = self.x.step();
        let scale = dx / (2.0 * std::f64::consts::PI * hbar).sqrt();
        p.iter()
            .map(|&pj| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &v) in self.values.iter().enumerate() {
                    acc += v * Complex64::from_polar(1.0, -pj * self.x.node(i) / hbar);
                }
                acc * scale
            })
            .collect()
    }

    pub fn edge_max(&self) -> f64 {
        let n = self.values.len();
        self.values[0].norm().max(self.values[n - 1].norm())
    }
}
