//! Phase-space points, sample batches, physical constants and run settings.

use crate::error::{check_dim, Result, WignerError};
use crate::scalar::Real;

/// Reduced Planck constant, particle mass and number of degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T> {
    pub hbar: T,
    pub mass: T,
    pub dim: usize,
}

impl<T: Real> PhysicalConstants<T> {
    /// Natural units: `hbar = mass = 1`.
    pub fn natural(dim: usize) -> Self {
        Self {
            hbar: T::one(),
            mass: T::one(),
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > T::zero() && self.hbar.is_finite()) {
            return Err(WignerError::NonPositiveConstant("hbar"));
        }
        if !(self.mass > T::zero() && self.mass.is_finite()) {
            return Err(WignerError::NonPositiveConstant("mass"));
        }
        if self.dim == 0 {
            return Err(WignerError::NonPositiveConstant("dim"));
        }
        Ok(())
    }
}

/// A point `(x, p)` of the 2N-dimensional phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint<T> {
    x: Vec<T>,
    p: Vec<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(x: Vec<T>, p: Vec<T>) -> Result<Self> {
        check_dim("phase point momentum", x.len(), p.len())?;
        if x.is_empty() {
            return Err(WignerError::NonPositiveConstant("dim"));
        }
        if x.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(WignerError::NonFinite("phase point"));
        }
        Ok(Self { x, p })
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            x: vec![T::zero(); dim],
            p: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>) {
        (self.x, self.p)
    }
}

/// Time-stamped phase-space samples stored as flat `M x N` position and
/// momentum arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBatch<T> {
    dim: usize,
    times: Vec<T>,
    x: Vec<T>,
    p: Vec<T>,
}

impl<T: Real> PhaseBatch<T> {
    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(capacity),
            x: Vec::with_capacity(capacity * dim),
            p: Vec::with_capacity(capacity * dim),
        }
    }

    /// Builds a batch from flat arrays, checking every shape.
    pub fn from_flat(dim: usize, times: Vec<T>, x: Vec<T>, p: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(WignerError::NonPositiveConstant("dim"));
        }
        check_dim("batch positions", times.len() * dim, x.len())?;
        check_dim("batch momenta", times.len() * dim, p.len())?;
        Ok(Self { dim, times, x, p })
    }

    pub fn push(&mut self, t: T, x: &[T], p: &[T]) -> Result<()> {
        check_dim("batch position", self.dim, x.len())?;
        check_dim("batch momentum", self.dim, p.len())?;
        self.times.push(t);
        self.x.extend_from_slice(x);
        self.p.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, m: usize) -> T {
        self.times[m]
    }

    pub fn x(&self, m: usize) -> &[T] {
        &self.x[m * self.dim..(m + 1) * self.dim]
    }

    pub fn p(&self, m: usize) -> &[T] {
        &self.p[m * self.dim..(m + 1) * self.dim]
    }

    pub fn point(&self, m: usize) -> PhasePoint<T> {
        PhasePoint {
            x: self.x(m).to_vec(),
            p: self.p(m).to_vec(),
        }
    }

    /// Checks `times[m]` lies in `[0, horizon]` for every sample.
    pub fn check_times(&self, horizon: T) -> Result<()> {
        match self
            .times
            .iter()
            .find(|&&t| !(t >= T::zero() && t <= horizon))
        {
            Some(&t) => Err(WignerError::TimeOutOfRange {
                t: t.as_f64(),
                horizon: horizon.as_f64(),
            }),
            None => Ok(()),
        }
    }
}

/// Training-loop settings: horizon `T`, batch size `M`, number of test
/// functions `K`, adversary steps per epoch and the two learning rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub horizon: T,
    pub batch_size: usize,
    pub num_test: usize,
    pub n_adv: usize,
    pub lr_gen: T,
    pub lr_adv: T,
    pub seed: u64,
    pub epochs: usize,
}

impl<T: Real> Default for RunConfig<T> {
    fn default() -> Self {
        Self {
            horizon: T::one(),
            batch_size: 256,
            num_test: 64,
            n_adv: 5,
            lr_gen: T::lit(1e-3),
            lr_adv: T::lit(1e-2),
            seed: 0,
            epochs: 1,
        }
    }
}

/// Checks every invariant of the run configuration and physical constants,
/// naming the first offending field.
pub fn validate_config<T: Real>(cfg: &RunConfig<T>, consts: &PhysicalConstants<T>) -> Result<()> {
    consts.validate()?;
    let positive = |v: T| v > T::zero() && v.is_finite();
    if !positive(cfg.horizon) {
        return Err(WignerError::NonPositiveConstant("horizon"));
    }
    if cfg.batch_size == 0 {
        return Err(WignerError::NonPositiveConstant("batch_size"));
    }
    if cfg.num_test == 0 {
        return Err(WignerError::NonPositiveConstant("num_test"));
    }
    if !positive(cfg.lr_gen) {
        return Err(WignerError::NonPositiveConstant("lr_gen"));
    }
    if !positive(cfg.lr_adv) {
        return Err(WignerError::NonPositiveConstant("lr_adv"));
    }
    if cfg.epochs == 0 {
        return Err(WignerError::NonPositiveConstant("epochs"));
    }
    Ok(())
}
