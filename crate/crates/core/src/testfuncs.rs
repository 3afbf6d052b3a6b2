//! Plane-wave test functions `sin(w_x.x + w_p.p + kappa t + b)` and the
//! pointwise bulk integrand of the weak-form residual.

use crate::error::{check_dim, Result, WignerError};
use crate::phase::{PhasePoint, PhysicalConstants};
use crate::potentials::{potential_difference_scratch, Potential};
use crate::rng::StreamRng;
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction<T> {
    pub w_x: Vec<T>,
    pub w_p: Vec<T>,
    pub kappa: T,
    pub b: T,
}

impl<T: Real> TestFunction<T> {
    pub fn new(w_x: Vec<T>, w_p: Vec<T>, kappa: T, b: T) -> Result<Self> {
        check_dim("test function w_p", w_x.len(), w_p.len())?;
        let tf = Self { w_x, w_p, kappa, b };
        if tf.params().any(|v| !v.is_finite()) {
            return Err(WignerError::NonFinite("test function"));
        }
        Ok(tf)
    }

    pub fn dim(&self) -> usize {
        self.w_x.len()
    }

    fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.w_x
            .iter()
            .chain(&self.w_p)
            .copied()
            .chain([self.kappa, self.b])
    }

    fn check(&self, pt: &PhasePoint<T>) -> Result<()> {
        check_dim("test function phase point", self.dim(), pt.dim())
    }

    /// `w_x.x + w_p.p + kappa t + b` without shape checks.
    #[inline]
    pub fn phase_at(&self, t: T, x: &[T], p: &[T]) -> T {
        dot(&self.w_x, x) + dot(&self.w_p, p) + self.kappa * t + self.b
    }

    pub fn phase(&self, t: T, pt: &PhasePoint<T>) -> Result<T> {
        self.check(pt)?;
        Ok(self.phase_at(t, pt.x(), pt.p()))
    }

    pub fn test_value(&self, t: T, pt: &PhasePoint<T>) -> Result<T> {
        self.phase(t, pt).map(T::sin)
    }

    pub fn test_cos(&self, t: T, pt: &PhasePoint<T>) -> Result<T> {
        self.phase(t, pt).map(T::cos)
    }

    /// `[kappa + w_x.p/m - D(x)] cos(phase)` where `D` is the shifted
    /// potential difference; two potential evaluations.
    pub fn residual_integrand<P: Potential<T> + ?Sized>(
        &self,
        t: T,
        pt: &PhasePoint<T>,
        v: &P,
        consts: &PhysicalConstants<T>,
    ) -> Result<T> {
        self.check(pt)?;
        let mut scratch = Vec::with_capacity(self.dim());
        self.integrand_parts(t, pt.x(), pt.p(), v, consts, &mut scratch)
            .map(|parts| parts.value())
    }

    pub(crate) fn integrand_parts<P: Potential<T> + ?Sized>(
        &self,
        t: T,
        x: &[T],
        p: &[T],
        v: &P,
        consts: &PhysicalConstants<T>,
        scratch: &mut Vec<T>,
    ) -> Result<IntegrandParts<T>> {
        let diff = potential_difference_scratch(v, x, &self.w_p, consts.hbar, scratch)?;
        let phi = self.phase_at(t, x, p);
        Ok(IntegrandParts {
            amplitude: self.kappa + dot(&self.w_x, p) / consts.mass - diff,
            sin: phi.sin(),
            cos: phi.cos(),
        })
    }
}

/// Pieces of the bulk integrand `amplitude * cos(phase)` that the gradient
/// assembly reuses.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct IntegrandParts<T> {
    pub amplitude: T,
    pub sin: T,
    pub cos: T,
}

impl<T: Real> IntegrandParts<T> {
    #[inline]
    pub fn value(&self) -> T {
        self.amplitude * self.cos
    }
}

/// Half-widths of the boxes test-function frequencies are drawn from and
/// clipped to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestScales<T> {
    pub x: T,
    pub p: T,
    pub kappa: T,
}

impl<T: Real> Default for TestScales<T> {
    fn default() -> Self {
        let four = T::lit(4.0);
        Self {
            x: four,
            p: four,
            kappa: four,
        }
    }
}

/// The adversary's parameters: `K` test functions sharing dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSet<T> {
    dim: usize,
    members: Vec<TestFunction<T>>,
}

impl<T: Real> TestFunctionSet<T> {
    pub fn new(members: Vec<TestFunction<T>>) -> Result<Self> {
        let dim = members.first().ok_or(WignerError::EmptyBatch)?.dim();
        for tf in &members {
            check_dim("test function set member", dim, tf.dim())?;
        }
        Ok(Self { dim, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[TestFunction<T>] {
        &self.members
    }

    /// Parameters per member in the flat layout `[w_x, w_p, kappa, b]`.
    pub fn stride(&self) -> usize {
        2 * self.dim + 2
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.members.iter().flat_map(|tf| tf.params()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        check_dim(
            "flat test parameters",
            self.len() * self.stride(),
            flat.len(),
        )?;
        let n = self.dim;
        for (tf, chunk) in self.members.iter_mut().zip(flat.chunks(2 * n + 2)) {
            tf.w_x.copy_from_slice(&chunk[..n]);
            tf.w_p.copy_from_slice(&chunk[n..2 * n]);
            tf.kappa = chunk[2 * n];
            tf.b = chunk[2 * n + 1];
        }
        Ok(())
    }

    /// Clamps every frequency into its box; offsets are left free.
    pub fn clip(&mut self, scales: &TestScales<T>) {
        for tf in &mut self.members {
            for w in &mut tf.w_x {
                *w = w.max(-scales.x).min(scales.x);
            }
            for w in &mut tf.w_p {
                *w = w.max(-scales.p).min(scales.p);
            }
            tf.kappa = tf.kappa.max(-scales.kappa).min(scales.kappa);
        }
    }
}

/// Draws `K` test functions with frequencies uniform on `[-scale, scale]` per
/// component and offsets uniform on `[0, 2 pi)`.
pub fn init_test_set<T: Real>(
    k: usize,
    dim: usize,
    scales: &TestScales<T>,
    rng: &mut StreamRng,
) -> Result<TestFunctionSet<T>> {
    if k == 0 {
        return Err(WignerError::NonPositiveConstant("num_test"));
    }
    if dim == 0 {
        return Err(WignerError::NonPositiveConstant("dim"));
    }
    let two_pi = T::lit(std::f64::consts::TAU);
    let members = (0..k)
        .map(|_| {
            let w_x = (0..dim)
                .map(|_| rng.uniform_in(-scales.x, scales.x))
                .collect();
            let w_p = (0..dim)
                .map(|_| rng.uniform_in(-scales.p, scales.p))
                .collect();
            let kappa = rng.uniform_in(-scales.kappa, scales.kappa);
            let b = rng.uniform_in(T::zero(), two_pi);
            TestFunction { w_x, w_p, kappa, b }
        })
        .collect();
    TestFunctionSet::new(members)
}
