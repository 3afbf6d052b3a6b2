//! Grid comparison of the operator form and the shifted-difference form of
//! the potential integral over a family of potentials, states and test
//! functions.

use rayon::prelude::*;

use crate::error::Result;
use crate::potentials::LibraryPotential;
use crate::rng::StreamRng;
use crate::testfuncs::TestFunction;

use super::grid::GridField;
use super::theta::{integrate_against_sin, reduced_integral, relative_gap, theta_apply};

/// Phase-space states used by the sweep; their shape does not depend on `hbar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepState {
    /// `exp(-x^2 - p^2) / pi`
    Gaussian,
    /// `(2 (x^2 + p^2) - 1) exp(-x^2 - p^2) / pi`
    FirstExcited,
}

impl SweepState {
    pub const ALL: [SweepState; 2] = [SweepState::Gaussian, SweepState::FirstExcited];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::FirstExcited => "first-excited",
        }
    }

    pub fn density(self, x: f64, p: f64) -> f64 {
        let r2 = x * x + p * p;
        let g = (-r2).exp() / std::f64::consts::PI;
        match self {
            Self::Gaussian => g,
            Self::FirstExcited => (2.0 * r2 - 1.0) * g,
        }
    }

    pub fn grid(self, half: f64, n: usize) -> Result<GridField> {
        GridField::square(half, n, |x, p| self.density(x, p))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub potentials: Vec<LibraryPotential<f64>>,
    pub hbars: Vec<f64>,
    pub tests: usize,
    /// Bound on `|w_x|`, `|w_p|` and `|kappa|`.
    pub max_frequency: f64,
    pub half_width: f64,
    pub nodes: usize,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let potentials = ["harmonic", "quartic", "double-well", "cosine"]
            .iter()
            .map(|name| LibraryPotential::from_name(name, &[], 1).expect("library name"))
            .collect();
        Self {
            potentials,
            hbars: vec![0.25, 1.0, 4.0],
            tests: 20,
            max_frequency: 2.0,
            half_width: 8.0,
            nodes: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub potential: &'static str,
    pub hbar: f64,
    pub state: SweepState,
    pub test: usize,
    pub weak: f64,
    pub reduced: f64,
    pub gap: f64,
}

pub fn sweep_test_functions(settings: &SweepSettings) -> Result<Vec<TestFunction<f64>>> {
    let mut rng = StreamRng::new(settings.seed).split(crate::rng::label::TEST_INIT);
    let w = settings.max_frequency;
    (0..settings.tests)
        .map(|_| {
            let wx = rng.uniform_in(-w, w);
            let wp = rng.uniform_in(-w, w);
            let kappa = rng.uniform_in(-w, w);
            let b = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
            TestFunction::new(vec![wx], vec![wp], kappa, b)
        })
        .collect()
}

/// Every `(potential, hbar, state, test)` combination, in that nesting order.
pub fn equivalence_sweep(settings: &SweepSettings) -> Result<Vec<SweepCase>> {
    let tfs = sweep_test_functions(settings)?;
    let mut combos = Vec::new();
    for v in &settings.potentials {
        for &hbar in &settings.hbars {
            for state in SweepState::ALL {
                combos.push((v, hbar, state));
            }
        }
    }
    let blocks: Vec<Result<Vec<SweepCase>>> = combos
        .par_iter()
        .map(|&(v, hbar, state)| {
            let f = state.grid(settings.half_width, settings.nodes)?;
            let theta = theta_apply(v, &f, hbar)?;
            tfs.iter()
                .enumerate()
                .map(|(k, tf)| {
                    let weak = integrate_against_sin(&theta, tf, 0.0)?;
                    let reduced = reduced_integral(v, &f, tf, hbar)?;
                    Ok(SweepCase {
                        potential: v.kind().name(),
                        hbar,
                        state,
                        test: k,
                        weak,
                        reduced,
                        gap: relative_gap(weak, reduced),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(combos.len() * tfs.len());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_agrees() {
        let settings = SweepSettings {
            hbars: vec![1.0],
            tests: 3,
            nodes: 128,
            ..SweepSettings::default()
        };
        let cases = equivalence_sweep(&settings).unwrap();
        assert_eq!(cases.len(), 4 * 2 * 3);
        for c in &cases {
            assert!(c.gap <= 1e-6, "{c:?}");
        }
    }

    #[test]
    fn test_functions_respect_the_bound() {
        let settings = SweepSettings::default();
        let tfs = sweep_test_functions(&settings).unwrap();
        assert_eq!(tfs.len(), 20);
        assert!(tfs
            .iter()
            .all(|t| t.w_x[0].abs() <= 2.0 && t.w_p[0].abs() <= 2.0));
        assert_eq!(tfs, sweep_test_functions(&settings).unwrap());
    }

    #[test]
    fn first_excited_state_is_normalized_and_signed() {
        let f = SweepState::FirstExcited.grid(8.0, 256).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-12);
        let neg = f.negative_volume();
        assert!(
            (neg - crate::pushforward::first_excited_negative_volume()).abs() < 1e-3,
            "{neg}"
        );
    }
}
