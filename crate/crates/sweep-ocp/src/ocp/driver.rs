use crate::dynamics::{feasibility_violation, simulate, step_catching_up, NodeConvention, Path};
use crate::error::Result;
use crate::geometry::TOL_FEAS;

use super::cost::MinimizerMode;
use super::problem::{cost_eval, localization_violation, DiscreteDecision, OcpProblem};
use super::report::{Solution, SolverKind};
use super::shooting::{solve_shooting, ShootingOptions};
use super::smoothed::{solve_smoothed, SmoothedOptions};
use super::transcribe::transcribe;

/// Solver choice with the options of both solvers.
#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub solver: SolverKind,
    pub smoothed: SmoothedOptions,
    pub shooting: ShootingOptions,
}

/// Control frozen at `u_0` with its catching-up trajectory.
pub fn frozen_warm_start(problem: &OcpProblem, k: usize) -> Result<DiscreteDecision> {
    let mesh = problem.mesh(k)?;
    let u = Path::constant(mesh, problem.initial_control.clone());
    let sim = simulate(&problem.system, &u)?;
    Ok(DiscreteDecision {
        x: sim.state,
        eta: sim.records.into_iter().map(|r| r.eta).collect(),
        u,
        convention: NodeConvention::Left,
    })
}

/// Solve the discrete problem on `k` intervals from the frozen warm start.
pub fn solve(problem: &OcpProblem, k: usize, opts: &SolveOptions) -> Result<Solution> {
    let warm = frozen_warm_start(problem, k)?;
    let mut sol = match opts.solver {
        SolverKind::Smoothed => solve_smoothed(&transcribe(problem, k)?, &warm, &opts.smoothed)?,
        SolverKind::Shooting => solve_shooting(problem, k, &warm.u, &opts.shooting)?,
    };
    settle_last_control(problem, &mut sol)?;
    Ok(sol)
}

/// In w12c mode `u_k` enters no cost term. With the cone at the left node
/// it does not enter the dynamics either, and with the cone at the right
/// node it only decides where the last step lands, so the solver may leave
/// it wherever it started. Continue the control with `u_{k−1}` (redoing the
/// last catching-up step in the right-node case) when that keeps the pair
/// feasible and raises neither the cost nor the localization violation.
fn settle_last_control(problem: &OcpProblem, sol: &mut Solution) -> Result<()> {
    let z = &sol.decision;
    let k = z.k();
    if problem.mode != MinimizerMode::W12xC || k == 0 {
        return Ok(());
    }
    let mut cand = z.clone();
    cand.u.values[k] = z.u.node(k - 1).clone();
    if z.convention == NodeConvention::Right {
        let mesh = z.x.mesh;
        let Ok((next, rec)) = step_catching_up(&problem.system, z.x.node(k - 1), cand.u.node(k), mesh.t(k - 1), mesh.h())
        else {
            return Ok(());
        };
        cand.x.values[k] = next;
        cand.eta[k - 1] = rec.eta;
    }
    if feasibility_violation(&problem.system, cand.x.node(k), cand.u.node(k))? > TOL_FEAS {
        return Ok(());
    }
    let (old, new) = (cost_eval(problem, z)?, cost_eval(problem, &cand)?);
    if new > old + 1e-12 * old.abs().max(1.0) || localization_violation(problem, &cand) > localization_violation(problem, z) {
        return Ok(());
    }
    sol.decision = cand;
    sol.report.cost = new;
    Ok(())
}
