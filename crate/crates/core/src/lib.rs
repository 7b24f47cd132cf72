//! Simulation and verification toolkit for the unit-speed thermodynamic
//! Cucker–Smale model with singular communication `φ(r) = r^(−α)`.
//!
//! - [`model`]: state types, kernels and the right-hand side.
//! - [`integrator`]: adaptive Dormand–Prince stepping with unit-sphere
//!   projection and collision localization.
//! - [`oracle`]: fixed-step RK4 reference path.
//! - [`diagnostics`]: diameters, entropy, Lyapunov functionals and
//!   along-trajectory checks.
//! - [`certificates`]: numerical evaluation of the flocking and spacing
//!   sufficient conditions.
//! - [`scenarios`]: initial-condition builders.
//! - [`io`]: run configuration, CSV/JSON/SVG output.

pub mod certificates;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod oracle;
pub mod scenarios;

pub use error::{Error, Result};
pub use model::{AgentState, KernelFamily, KernelSpec, SystemParams, SystemState};
