//! One-dimensional grid reference solvers used to verify the sampled
//! estimators: direct evaluation of the nonlocal operator, split-step
//! Schrödinger dynamics, the Wigner transform and closed-form flows.

pub mod analytic;
pub mod evolve;
pub mod grid;
pub mod schrodinger;
pub mod sweep;
pub mod theta;
pub mod wigner;

pub use analytic::AnalyticSolution;
pub use evolve::{bulk_integral, grid_weak_residual, wigner_snapshots};
pub use grid::{Axis, GridField, WaveFunctionGrid};
pub use schrodinger::{coherent_wave, first_excited_wave, split_step_evolve, split_step_observed};
pub use sweep::{equivalence_sweep, SweepCase, SweepSettings, SweepState};
pub use theta::{
    integrate_against_sin, reduced_integral, reduced_integral_at, relative_gap, theta_apply,
    theta_apply_truncated, theta_apply_with, weak_integral_quadrature, ThetaTolerances,
};
pub use wigner::wigner_transform;
