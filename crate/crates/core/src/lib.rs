//! Weak adversarial signed pushforward solver for the Wigner transport
//! equation, with grid-based reference solvers for verification.
//!
//! The numerical core is generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`, which is what the CLI and checkpoints use.

// `!(x > 0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod network;
pub mod oracle;
pub mod phase;
pub mod potentials;
pub mod pushforward;
pub mod residual;
pub mod rng;
pub mod scalar;
pub mod testfuncs;
pub mod trainer;

pub use error::{Result, WignerError};
pub use rng::StreamRng;
pub use scalar::Real;

pub type PhasePoint = phase::PhasePoint<f64>;
pub type PhaseBatch = phase::PhaseBatch<f64>;
pub type PhysicalConstants = phase::PhysicalConstants<f64>;
pub type RunConfig = phase::RunConfig<f64>;
pub type LibraryPotential = potentials::LibraryPotential<f64>;
pub type TestFunction = testfuncs::TestFunction<f64>;
pub type TestFunctionSet = testfuncs::TestFunctionSet<f64>;
pub type Mlp = network::Mlp<f64>;
pub type SignedPushforward = pushforward::SignedPushforward<f64>;
pub type InitialDecomposition = pushforward::InitialDecomposition<f64>;
