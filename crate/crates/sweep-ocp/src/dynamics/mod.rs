//! Catching-up time stepping, inclusion residuals and mesh-refinement studies.

pub mod convergence;
pub mod path;
pub mod simulate;
pub mod system;

pub use convergence::{
    convergence_study, feasible_companion_polyhedral, sample_controls, w12_distance, worker_count,
    ConvergenceRow, ConvergenceTable, ERROR_NOISE_FLOOR,
};
pub use path::{Mesh, Path};
pub use simulate::{
    feasibility_violation, inclusion_residual, inclusion_residual_with, simulate, step_catching_up,
    NodeConvention, Simulation, StepRecord,
};
pub use system::{Drift, DriftFn, DriftJacFn, StateMap, SweepingSystem};
