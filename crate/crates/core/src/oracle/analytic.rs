//! Closed-form classical flows for the quadratic cases, where the Wigner and
//! Liouville equations coincide.

use crate::error::{Result, WignerError};
use crate::pushforward::PhaseFlow;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticSolution {
    Free { mass: f64 },
    Harmonic { mass: f64, omega: f64 },
}

impl AnalyticSolution {
    /// `free` takes `mass`; `harmonic` takes `mass` and `omega`. Both default to 1.
    pub fn from_name(name: &str, params: &[(&str, f64)]) -> Result<Self> {
        let known: &[&str] = match name {
            "free" => &["mass"],
            "harmonic" => &["mass", "omega"],
            _ => return Err(WignerError::UnknownName(name.to_string())),
        };
        if let Some((key, _)) = params.iter().find(|(k, _)| !known.contains(k)) {
            return Err(WignerError::UnknownName(format!("{name}.{key}")));
        }
        let get = |key: &str| {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map_or(1.0, |&(_, v)| v)
        };
        let (mass, omega) = (get("mass"), get("omega"));
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(WignerError::NonPositiveConstant("mass"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(WignerError::NonPositiveConstant("omega"));
        }
        Ok(match name {
            "free" => Self::Free { mass },
            _ => Self::Harmonic { mass, omega },
        })
    }

    /// Image of `(x, p)` after time `t` (negative `t` runs backwards).
    pub fn flow_point<T: Real>(&self, t: T, x: T, p: T) -> (T, T) {
        match *self {
            Self::Free { mass } => (x + p * t / T::lit(mass), p),
            Self::Harmonic { mass, omega } => {
                let (m, w) = (T::lit(mass), T::lit(omega));
                let (s, c) = (w * t).sin_cos();
                (x * c + p / (m * w) * s, p * c - m * w * x * s)
            }
        }
    }

    /// `f(t, x, p) = f0(flow(-t, x, p))`.
    pub fn density(&self, f0: impl Fn(f64, f64) -> f64, t: f64, x: f64, p: f64) -> f64 {
        let (x0, p0) = self.flow_point(-t, x, p);
        f0(x0, p0)
    }
}

/// Applies the one-dimensional map to every coordinate pair.
impl<T: Real> PhaseFlow<T> for AnalyticSolution {
    fn flow(&self, t: T, x: &[T], p: &[T], out_x: &mut [T], out_p: &mut [T]) {
        for i in 0..x.len() {
            let (a, b) = self.flow_point(t, x[i], p[i]);
            out_x[i] = a;
            out_p[i] = b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn examples() {
        let free = AnalyticSolution::from_name("free", &[("mass", 2.0)]).unwrap();
        assert_eq!(free.flow_point(3.0, 1.0, 0.5), (1.75, 0.5));
        let h = AnalyticSolution::from_name("harmonic", &[]).unwrap();
        let (x, p) = h.flow_point(2.0 * PI, 0.3, -1.2);
        assert!((x - 0.3).abs() < 1e-14 && (p + 1.2).abs() < 1e-14);
        let (x, p) = h.flow_point(PI / 2.0, 1.0, 0.0);
        assert!(x.abs() < 1e-15 && (p + 1.0).abs() < 1e-15);
        assert!(AnalyticSolution::from_name("morse", &[]).is_err());
        assert!(AnalyticSolution::from_name("free", &[("omega", 1.0)]).is_err());
    }

    #[test]
    fn density_transports_the_initial_data() {
        let h = AnalyticSolution::Harmonic {
            mass: 1.5,
            omega: 0.8,
        };
        let f0 = |x: f64, p: f64| (-(x - 1.0).powi(2) - p * p).exp();
        let t = 0.9;
        let (x, p) = h.flow_point(t, 1.0, 0.0);
        assert!((h.density(f0, t, x, p) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flow_is_symplectic() {
        let h = AnalyticSolution::Harmonic {
            mass: 2.0,
            omega: 3.0,
        };
        let e = 1e-6;
        let (a, b): ((f64, f64), (f64, f64)) =
            (h.flow_point(0.7, e, 0.0), h.flow_point(0.7, 0.0, e));
        let det = (a.0 * b.1 - a.1 * b.0) / (e * e);
        assert!((det - 1.0).abs() < 1e-8);
    }
}
