//! Black-box potential oracles and the shifted finite difference that stands
//! in for the nonlocal potential operator under plane-wave testing.
//!
//! Training reaches `V` only through [`potential_difference`]. The
//! derivative-based routines ([`classical_force_term`],
//! [`moyal_truncated_term`]) exist for verification.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_dim, Result, WignerError};
use crate::scalar::Real;

/// A scalar potential `V: R^N -> R` queried pointwise.
pub trait Potential<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[T]) -> T;

    /// For separable potentials `V(x) = sum_i U(x_i)`, the per-coordinate term.
    fn separable(&self) -> Option<&dyn ScalarTerm<T>> {
        None
    }
}

/// Per-coordinate term `U` of a separable potential.
pub trait ScalarTerm<T: Real>: Send + Sync {
    fn term(&self, u: T) -> T;
}

impl<T: Real, P: Potential<T> + ?Sized> Potential<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T]) -> T {
        (**self).eval(x)
    }
    fn separable(&self) -> Option<&dyn ScalarTerm<T>> {
        (**self).separable()
    }
}

impl<T: Real, P: Potential<T> + ?Sized> Potential<T> for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T]) -> T {
        (**self).eval(x)
    }
    fn separable(&self) -> Option<&dyn ScalarTerm<T>> {
        (**self).separable()
    }
}

/// The shipped one-dimensional profiles; each extends separably to any `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind<T> {
    Free,
    /// `1/2 m omega^2 u^2`
    Harmonic {
        mass: T,
        omega: T,
    },
    /// `1/2 m omega^2 u^2 + lambda u^4`
    Quartic {
        mass: T,
        omega: T,
        lambda: T,
    },
    /// `a (u^2 - c^2)^2`
    DoubleWell {
        a: T,
        c: T,
    },
    /// `v0 cos(k0 u)`
    Cosine {
        v0: T,
        k0: T,
    },
    /// `sum_j coeffs[j] u^j`
    Polynomial {
        coeffs: Vec<T>,
    },
}

impl<T: Real> PotentialKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Free => "free",
            Self::Harmonic { .. } => "harmonic",
            Self::Quartic { .. } => "quartic",
            Self::DoubleWell { .. } => "double-well",
            Self::Cosine { .. } => "cosine",
            Self::Polynomial { .. } => "polynomial",
        }
    }

    #[inline]
    pub fn value(&self, u: T) -> T {
        let half = T::lit(0.5);
        match *self {
            Self::Free => T::zero(),
            Self::Harmonic { mass, omega } => half * mass * omega * omega * u * u,
            Self::Quartic {
                mass,
                omega,
                lambda,
            } => {
                let u2 = u * u;
                half * mass * omega * omega * u2 + lambda * u2 * u2
            }
            Self::DoubleWell { a, c } => {
                let s = u * u - c * c;
                a * s * s
            }
            Self::Cosine { v0, k0 } => v0 * (k0 * u).cos(),
            Self::Polynomial { ref coeffs } => {
                coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
            }
        }
    }
}

/// A library potential extended separably to `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryPotential<T> {
    kind: PotentialKind<T>,
    dim: usize,
}

impl<T: Real> LibraryPotential<T> {
    pub fn new(kind: PotentialKind<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(WignerError::NonPositiveConstant("dim"));
        }
        Ok(Self { kind, dim })
    }

    /// Looks up a named entry. Missing parameters take the defaults
    /// `mass = omega = 1`, `lambda = 0.1`, `a = 1`, `c = 1`, `v0 = 1`, `k0 = 1`.
    pub fn from_name(name: &str, params: &[(&str, f64)], dim: usize) -> Result<Self> {
        let known: &[&str] = match name {
            "free" => &[],
            "harmonic" => &["mass", "omega"],
            "quartic" => &["mass", "omega", "lambda"],
            "double-well" => &["a", "c"],
            "cosine" => &["v0", "k0"],
            _ => return Err(WignerError::UnknownName(name.to_string())),
        };
        if let Some((key, _)) = params.iter().find(|(k, _)| !known.contains(k)) {
            return Err(WignerError::UnknownName(format!("{name}.{key}")));
        }
        let get = |key: &str, default: f64| -> T {
            T::lit(
                params
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map_or(default, |&(_, v)| v),
            )
        };
        let kind = match name {
            "free" => PotentialKind::Free,
            "harmonic" => PotentialKind::Harmonic {
                mass: get("mass", 1.0),
                omega: get("omega", 1.0),
            },
            "quartic" => PotentialKind::Quartic {
                mass: get("mass", 1.0),
                omega: get("omega", 1.0),
                lambda: get("lambda", 0.1),
            },
            "double-well" => PotentialKind::DoubleWell {
                a: get("a", 1.0),
                c: get("c", 1.0),
            },
            _ => PotentialKind::Cosine {
                v0: get("v0", 1.0),
                k0: get("k0", 1.0),
            },
        };
        Self::new(kind, dim)
    }

    pub fn kind(&self) -> &PotentialKind<T> {
        &self.kind
    }
}

impl<T: Real> ScalarTerm<T> for PotentialKind<T> {
    fn term(&self, u: T) -> T {
        self.value(u)
    }
}

impl<T: Real> Potential<T> for LibraryPotential<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[T]) -> T {
        x.iter().map(|&u| self.kind.value(u)).sum()
    }

    fn separable(&self) -> Option<&dyn ScalarTerm<T>> {
        Some(&self.kind)
    }
}

/// A user-supplied closure treated as a non-separable black box.
pub struct FnPotential<F> {
    dim: usize,
    f: F,
}

impl<F> FnPotential<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Real, F: Fn(&[T]) -> T + Send + Sync> Potential<T> for FnPotential<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

/// Hides the separable structure of the wrapped potential so every query goes
/// through `eval`.
pub struct Opaque<P>(pub P);

impl<T: Real, P: Potential<T>> Potential<T> for Opaque<P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[T]) -> T {
        self.0.eval(x)
    }
}

/// Instrumented wrapper counting full and per-coordinate evaluations.
pub struct CountingPotential<P> {
    inner: P,
    evals: AtomicU64,
    terms: AtomicU64,
}

impl<P> CountingPotential<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            evals: AtomicU64::new(0),
            terms: AtomicU64::new(0),
        }
    }

    /// Number of `eval` calls so far.
    pub fn eval_calls(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    /// Number of per-coordinate `term` calls so far.
    pub fn term_calls(&self) -> u64 {
        self.terms.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.evals.store(0, Ordering::Relaxed);
        self.terms.store(0, Ordering::Relaxed);
    }
}

impl<T: Real, P: Potential<T>> ScalarTerm<T> for CountingPotential<P> {
    fn term(&self, u: T) -> T {
        self.terms.fetch_add(1, Ordering::Relaxed);
        self.inner
            .separable()
            .expect("term queried on a non-separable potential")
            .term(u)
    }
}

impl<T: Real, P: Potential<T>> Potential<T> for CountingPotential<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[T]) -> T {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(x)
    }

    fn separable(&self) -> Option<&dyn ScalarTerm<T>> {
        self.inner.separable().map(|_| self as &dyn ScalarTerm<T>)
    }
}

/// Finite-difference steps for the verification-only derivative routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps<T> {
    pub first: T,
    pub third: T,
}

impl<T: Real> Default for FdSteps<T> {
    fn default() -> Self {
        Self {
            first: T::lit(1e-5),
            third: T::lit(1e-2),
        }
    }
}

fn checked<T: Real>(v: T, x: &[T]) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(WignerError::NonFinitePotential(
            x.iter().map(|u| u.as_f64()).collect(),
        ))
    }
}

/// `[V(x + hbar/2 w_p) - V(x - hbar/2 w_p)] / hbar`.
///
/// Two `eval` calls, or `2N` scalar calls when the potential is separable.
pub fn potential_difference<T: Real, P: Potential<T> + ?Sized>(
    v: &P,
    x: &[T],
    w_p: &[T],
    hbar: T,
) -> Result<T> {
    let mut scratch = Vec::new();
    potential_difference_scratch(v, x, w_p, hbar, &mut scratch)
}

pub(crate) fn potential_difference_scratch<T: Real, P: Potential<T> + ?Sized>(
    v: &P,
    x: &[T],
    w_p: &[T],
    hbar: T,
    scratch: &mut Vec<T>,
) -> Result<T> {
    let n = v.dim();
    check_dim("potential_difference position", n, x.len())?;
    check_dim("potential_difference w_p", n, w_p.len())?;
    let half = hbar * T::lit(0.5);
    if let Some(u) = v.separable() {
        let mut acc = T::zero();
        for (&xi, &wi) in x.iter().zip(w_p) {
            let d = half * wi;
            acc += u.term(xi + d) - u.term(xi - d);
        }
        return checked(acc / hbar, x);
    }
    scratch.clear();
    scratch.extend(x.iter().zip(w_p).map(|(&xi, &wi)| xi + half * wi));
    let plus = checked(v.eval(scratch), scratch)?;
    scratch.clear();
    scratch.extend(x.iter().zip(w_p).map(|(&xi, &wi)| xi - half * wi));
    let minus = checked(v.eval(scratch), scratch)?;
    Ok((plus - minus) / hbar)
}

/// Central-difference gradient of `V` at `x` (`2N` evaluations).
pub fn fd_gradient<T: Real, P: Potential<T> + ?Sized>(v: &P, x: &[T], step: T) -> Result<Vec<T>> {
    let mut grad = vec![T::zero(); x.len()];
    let mut scratch = x.to_vec();
    fd_gradient_into(v, &mut scratch, step, &mut grad)?;
    Ok(grad)
}

/// Gradient at the point held in `at`, which is restored before returning.
pub(crate) fn fd_gradient_into<T: Real, P: Potential<T> + ?Sized>(
    v: &P,
    at: &mut [T],
    step: T,
    grad: &mut [T],
) -> Result<()> {
    check_dim("fd_gradient position", v.dim(), at.len())?;
    let two_h = step + step;
    if let Some(u) = v.separable() {
        for (g, &xi) in grad.iter_mut().zip(at.iter()) {
            *g = (u.term(xi + step) - u.term(xi - step)) / two_h;
        }
    } else {
        for i in 0..at.len() {
            let xi = at[i];
            at[i] = xi + step;
            let plus = v.eval(at);
            at[i] = xi - step;
            let minus = v.eval(at);
            at[i] = xi;
            grad[i] = (plus - minus) / two_h;
        }
    }
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(WignerError::NonFinitePotential(
            at.iter().map(|u| u.as_f64()).collect(),
        ))
    }
}

/// Central-difference estimate of `grad V(x) . w_p`, the `hbar -> 0` limit of
/// [`potential_difference`].
pub fn classical_force_term<T: Real, P: Potential<T> + ?Sized>(
    v: &P,
    x: &[T],
    w_p: &[T],
    fd_step: T,
) -> Result<T> {
    check_dim("classical_force_term w_p", v.dim(), w_p.len())?;
    if !(fd_step > T::zero()) {
        return Err(WignerError::NonPositiveConstant("fd_step"));
    }
    let mut at = x.to_vec();
    let mut grad = vec![T::zero(); x.len()];
    fd_gradient_into(v, &mut at, fd_step, &mut grad)?;
    Ok(crate::scalar::dot(&grad, w_p))
}

/// Truncation order of the odd-derivative (Moyal) expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoyalOrder {
    First,
    Third,
}

/// Third directional derivative `sum_ijk V_ijk w_i w_j w_k` by a five-point
/// central stencil along `w`.
fn third_directional<T: Real, P: Potential<T> + ?Sized>(v: &P, x: &[T], w: &[T], h: T) -> T {
    let mut at = vec![T::zero(); x.len()];
    let mut g = |s: T| {
        for ((a, &xi), &wi) in at.iter_mut().zip(x).zip(w) {
            *a = xi + s * wi;
        }
        v.eval(&at)
    };
    let two = T::lit(2.0);
    (g(two * h) - two * g(h) + two * g(-h) - g(-two * h)) / (two * h * h * h)
}

/// The odd-order expansion of [`potential_difference`] truncated after the
/// first or third derivative term.
pub fn moyal_truncated_term<T: Real, P: Potential<T> + ?Sized>(
    v: &P,
    x: &[T],
    w_p: &[T],
    hbar: T,
    order: MoyalOrder,
    steps: FdSteps<T>,
) -> Result<T> {
    let first = classical_force_term(v, x, w_p, steps.first)?;
    match order {
        MoyalOrder::First => Ok(first),
        MoyalOrder::Third => {
            let third = third_directional(v, x, w_p, steps.third);
            checked(first + hbar * hbar / T::lit(24.0) * third, x)
        }
    }
}
