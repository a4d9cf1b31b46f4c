//! Discrete optimal control: costs, transcription and the two solvers.

pub mod cost;
pub mod driver;
pub mod problem;
pub mod report;
pub mod shooting;
pub mod smoothed;
pub mod transcribe;

pub use cost::{Breakpoints, MinimizerMode, RunningArgs, RunningCost, RunningFn, RunningGrad, RunningTerm, TerminalCost, TerminalFn};
pub use driver::{frozen_warm_start, solve, SolveOptions};
pub use problem::{anchor_theta, cost_eval, localization_violation, slope_mismatch, Anchor, DiscreteDecision, OcpProblem};
pub use report::{Solution, SolveReport, SolverKind, StageRecord};
pub use shooting::{solve_shooting, ShootingOptions};
pub use smoothed::{default_sigma_schedule, solve_smoothed, SmoothedOptions};
pub use transcribe::{transcribe, Layout, Transcription};
