//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solver is generic over (`f32` or `f64`).
///
/// Everything that ships (CLI, presets, checkpoints) runs in `f64`; the
/// residuals cancel boundary against bulk terms and single precision does not
/// reach the verification tolerances.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// `c <- a b + beta c` for an `m x k` by `k x n` product on strided views.
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: View<'_, Self>,
        b: View<'_, Self>,
        beta: Self,
        c: ViewMut<'_, Self>,
    );
}

/// Read-only matrix view: element `(i, j)` sits at `data[i * row + j * col]`.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub row: usize,
    pub col: usize,
}

#[derive(Debug)]
pub struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub row: usize,
    pub col: usize,
}

fn span(rows: usize, cols: usize, row: usize, col: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * row + (cols - 1) * col + 1
    }
}

macro_rules! real_impl {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: View<'_, Self>,
                b: View<'_, Self>,
                beta: Self,
                c: ViewMut<'_, Self>,
            ) {
                assert!(
                    a.data.len() >= span(m, k, a.row, a.col),
                    "gemm: lhs view too short"
                );
                assert!(
                    b.data.len() >= span(k, n, b.row, b.col),
                    "gemm: rhs view too short"
                );
                assert!(
                    c.data.len() >= span(m, n, c.row, c.col),
                    "gemm: output view too short"
                );
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above keep every addressed element inside
                // its slice, and `c` is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.data.as_ptr(),
                        a.row as isize,
                        a.col as isize,
                        b.data.as_ptr(),
                        b.row as isize,
                        b.col as isize,
                        beta,
                        c.data.as_mut_ptr(),
                        c.row as isize,
                        c.col as isize,
                    )
                }
            }
        }
    };
}

real_impl!(f64, matrixmultiply::dgemm);
real_impl!(f32, matrixmultiply::sgemm);

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Numerically stable `ln(1 + e^r)`.
#[inline]
pub(crate) fn softplus<T: Real>(r: T) -> T {
    r.max(T::zero()) + (-r.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Real>(r: T) -> T {
    if r >= T::zero() {
        T::one() / (T::one() + (-r).exp())
    } else {
        let e = r.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for `a > 0`.
#[inline]
pub(crate) fn softplus_inverse<T: Real>(a: T) -> T {
    // ln(e^a - 1) = a + ln(1 - e^-a)
    a + (-(-a).exp()).ln_1p()
}
