//! A numerical laboratory for blow-up and extinction of stochastic delay
//! differential equations with one discrete delay,
//!
//! ```text
//! dx(t) = F(x(t), x(t − τ)) dt + g(x(t)) dW(t),   x = φ on [−τ, 0],
//! ```
//!
//! and of their instantaneous counterparts `dx = F(x, a)dt + g(x)dW`.
//!
//! * [`sde`] and [`sdde`] integrate paths with Euler–Maruyama up to a
//!   certified blow-up, an extinction barrier, or a horizon.
//! * [`comparison`] freezes the delayed argument at bounding constants and
//!   checks the pathwise sandwich `x₁ ≤ x ≤ x₂` under shared noise.
//! * [`transform`] pushes coefficients through a smooth change of variables
//!   (Itô's formula) and checks direct vs transformed simulation.
//! * [`timechange`] checks `∫σ dW = B(∫σ² ds)` through quadratic variation
//!   and normality diagnostics.
//! * [`montecarlo`] runs seeded replicas (in parallel with the `parallel`
//!   feature) and reports Wilson intervals.
//! * [`cli`] is the config-driven batch front end.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cli;
pub mod comparison;
mod error;
pub mod event;
pub mod exec;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod sde;
pub mod sdde;
pub mod segment;
pub mod timechange;
pub mod transform;

pub use error::{Error, Result};
pub use event::{FaultKind, IntegrationFault, PathResult, StoppingEvent};
pub use model::{osgood_divergent, validate_modulus, ModelSpec, ModulusFamily, Monotonicity};
pub use noise::NoiseSource;
pub use sde::{simulate_sde, DtPolicy, IntegratorConfig, SdeProblem, SimulationError};
pub use sdde::{build_initial_from_constant, build_initial_from_path, simulate_sdde, HistoryBuffer};
pub use segment::Segment;
