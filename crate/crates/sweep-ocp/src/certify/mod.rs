//! Multiplier recovery and numerical checks of the discrete and continuous
//! Euler–Lagrange conditions, nondegeneracy and the maximum condition.
//!
//! Interval quantities (`η`, `ν`, densities of `γ`) are constant on each
//! mesh interval and evaluated at the interval's anchor node.

mod certificate;
mod eta;
mod hamiltonian;
mod measure;
mod nondegeneracy;
mod report;
mod residuals;

pub use certificate::{
    assemble_certificate, q_from_measure, subgradient_selections, Assembly, Certificate, DiscreteCertificate,
};
pub use eta::{recover_eta, recover_eta_with};
pub use hamiltonian::{
    conventional_hamiltonian, conventional_sufficiency_check, lift_multipliers, max_condition_check,
    modified_hamiltonian, smooth_inequality_lift, IntervalCheck, LiftReport, MaxConditionReport, SufficiencyReport,
};
pub use measure::{Atom, VectorMeasure};
pub use nondegeneracy::{check_nondegeneracy, Nondegeneracy};
pub use report::{HamiltonianValue, ResidualItem, ResidualReport};
pub use residuals::{residual_continuous_el, residual_discrete_el};

/// Pass threshold for residuals.
pub const TOL_RESIDUAL: f64 = 1e-6;
/// Positivity threshold for multipliers and strict interiority.
pub const TOL_POS: f64 = 1e-8;
