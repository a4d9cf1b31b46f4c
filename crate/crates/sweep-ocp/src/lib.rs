//! Optimal control of sweeping processes with controlled moving sets.
//!
//! The crate simulates the inclusion `x' ∈ f(t,x) − N(g(x); C(t,u))` with
//! `C(u) = {x | ψ(x,u) ∈ Θ}` by catching-up projections, solves the discrete
//! optimal control problems built on it, and checks candidate solutions
//! against the extended Euler–Lagrange and maximum-principle conditions.
//!
//! Modules are layered bottom-up:
//!
//! * [`geometry`]: constraint sets, fields, projections, normal cones and coderivatives.
//! * [`dynamics`]: meshes, paths, the catching-up simulator and convergence tools.
//! * [`ocp`]: discrete problems, transcription and the two solvers.
//! * [`certify`]: multiplier recovery and residual reports.
//! * [`problems`]: the worked instances used as oracles.
//! * [`cli`]: the file formats and command implementations behind the `sweep` binary.

pub mod certify;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod ocp;
pub mod problems;

pub use error::{Result, SweepError};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
