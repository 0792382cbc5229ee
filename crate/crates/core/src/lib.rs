//! Adaptive gradient optimizers and the tooling to study how they behave
//! near a one-point-convex optimum.
//!
//! The crate is split into five layers:
//!
//! - [`numerics`]: dense vectors, seeded randomness, finite-difference gradients.
//! - [`objectives`]: differentiable test functions with known optima.
//! - [`optimizers`]: SGD with momentum, Adam, AMSGrad, AdaBound and AdaFix,
//!   all exposed as pure step functions over an explicit state.
//! - [`analysis`]: the recede bound, one-point-convexity checks, smoothness
//!   estimation and escape detection.
//! - [`harness`]: experiment configs, trajectory recording, CSV/JSON output
//!   and the verification suites driven by the `adafix` binary.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod objectives;
pub mod optimizers;

pub use error::{Error, Result};
pub use numerics::{ParamVector, Rng};
pub use objectives::{GradientSource, NoisyObjective, Objective};
pub use optimizers::{HyperParams, OptimizerKind, OptimizerState, StepResult};
