use serde::{Deserialize, Serialize};

use crate::error::{Result, SweepError};

use super::problem::DiscreteDecision;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Smoothed,
    Shooting,
}

impl std::str::FromStr for SolverKind {
    type Err = SweepError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothed" => Ok(Self::Smoothed),
            "shooting" => Ok(Self::Shooting),
            other => Err(SweepError::Config(format!(
                "unknown solver '{other}' (expected smoothed or shooting)"
            ))),
        }
    }
}

/// One continuation stage of the smoothed solver.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub sigma: f64,
    pub iterations: usize,
    /// Discrete cost `J_k` at the end of the stage.
    pub cost: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    /// Merit before and after every accepted step, under the penalty used
    /// by that step's line search.
    pub merit_steps: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub k: usize,
    pub cost: f64,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub dynamics_residual: f64,
    pub endpoint_violation: f64,
    pub localization_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Empty for the shooting solver.
    pub stages: Vec<StageRecord>,
    /// Cost at every accepted iterate (shooting) or at the end of every
    /// stage (smoothed).
    pub cost_trace: Vec<f64>,
    pub message: String,
}

fn not_above(next: f64, prev: f64) -> bool {
    next <= prev + 1e-12 * prev.abs().max(1.0)
}

impl SolveReport {
    /// Accepted steps never raise the quantity their line search controls,
    /// and `cost_trace` is non-increasing (up to rounding).
    pub fn monotone(&self) -> bool {
        let steps = self
            .stages
            .iter()
            .flat_map(|s| s.merit_steps.iter())
            .all(|[before, after]| not_above(*after, *before));
        steps && self.cost_trace.windows(2).all(|w| not_above(w[1], w[0]))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub decision: DiscreteDecision,
    pub report: SolveReport,
}
