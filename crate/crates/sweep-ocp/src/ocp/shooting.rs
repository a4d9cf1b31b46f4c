use crate::dynamics::{inclusion_residual, simulate, NodeConvention, Path, Simulation};
use crate::error::{Result, SweepError};
use crate::{Matrix, Vector};

use super::problem::{cost_eval, localization_violation, DiscreteDecision, OcpProblem};
use super::report::{Solution, SolveReport, SolverKind};

const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct ShootingOptions {
    /// Stop once the predicted decrease `−∇Jᵀd` falls below this.
    pub tol: f64,
    /// A stalled line search counts as converged when the predicted
    /// decrease is below this; finite differences cannot resolve smaller
    /// decreases at the kinks of the catching-up map.
    pub stall_tol: f64,
    pub max_iter: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            stall_tol: 1e-8,
            max_iter: 500,
        }
    }
}

struct Shooter<'a> {
    problem: &'a OcpProblem,
    mesh: crate::dynamics::Mesh,
}

impl Shooter<'_> {
    fn control(&self, free: &Vector) -> Path {
        let m = self.problem.m();
        let mut nodes = vec![self.problem.initial_control.clone()];
        nodes.extend((0..self.mesh.k).map(|j| free.rows(j * m, m).clone_owned()));
        Path::new(self.mesh, nodes).expect("node count matches the mesh")
    }

    fn decision(&self, u: Path, sim: &Simulation) -> DiscreteDecision {
        DiscreteDecision {
            x: sim.state.clone(),
            u,
            eta: sim.records.iter().map(|r| r.eta.clone()).collect(),
            convention: NodeConvention::Right,
        }
    }

    /// Cost of the simulated pair, or `None` if the trial point is unusable.
    fn cost(&self, free: &Vector) -> Option<f64> {
        let u = self.control(free);
        let sim = simulate(&self.problem.system, &u).ok()?;
        let z = self.decision(u, &sim);
        if localization_violation(self.problem, &z) > 0.0 {
            return None;
        }
        cost_eval(self.problem, &z).ok().filter(|c| c.is_finite())
    }

    /// Central differences, one-sided where one neighbour cannot be simulated.
    fn gradient(&self, free: &Vector, base: f64) -> Option<Vector> {
        let step = 1e-6 * (1.0 + free.amax());
        let mut g = Vector::zeros(free.len());
        for i in 0..free.len() {
            let mut p = free.clone();
            p[i] = free[i] + step;
            let fwd = self.cost(&p);
            p[i] = free[i] - step;
            let bwd = self.cost(&p);
            g[i] = match (fwd, bwd) {
                (Some(f), Some(b)) => (f - b) / (2.0 * step),
                (Some(f), None) => (f - base) / step,
                (None, Some(b)) => (base - b) / step,
                (None, None) => return None,
            };
        }
        Some(g)
    }
}

/// Quasi-Newton descent on `J(simulate(u))` over the control nodes `u_1..u_k`;
/// `u_0` stays at the problem's initial control.
pub fn solve_shooting(
    problem: &OcpProblem,
    k: usize,
    initial_control: &Path,
    opts: &ShootingOptions,
) -> Result<Solution> {
    let mesh = problem.mesh(k)?;
    let guess = if initial_control.mesh == mesh {
        initial_control.clone()
    } else {
        initial_control.resample(mesh)?
    };
    crate::error::check_dim("initial control", problem.m(), guess.dim())?;
    if !(opts.tol > 0.0) || !(opts.stall_tol >= 0.0) || opts.max_iter == 0 {
        return Err(SweepError::Config("tolerance and iteration cap must be positive".into()));
    }
    let sh = Shooter { problem, mesh };
    let m = problem.m();
    let mut free = Vector::from_iterator(k * m, (1..=k).flat_map(|j| guess.node(j).iter().copied().collect::<Vec<_>>()));
    simulate(&problem.system, &sh.control(&free))?;
    let mut cost = sh
        .cost(&free)
        .ok_or_else(|| SweepError::Precondition("initial control violates the localization constraints".into()))?;
    let mut cost_trace = vec![cost];
    let mut iterations = 0;
    let mut converged = free.is_empty();
    let mut message = if converged { "no free control nodes".to_string() } else { String::new() };
    let mut inv = Matrix::identity(free.len(), free.len());
    let mut grad = if converged { Vector::zeros(0) } else { sh.gradient(&free, cost).ok_or_else(gradient_failure)? };
    while !converged && iterations < opts.max_iter {
        let mut d = -(&inv * &grad);
        let mut slope = grad.dot(&d);
        if slope >= 0.0 {
            inv = Matrix::identity(free.len(), free.len());
            d = -grad.clone();
            slope = grad.dot(&d);
        }
        if -slope < opts.tol {
            converged = true;
            message = "predicted decrease below tolerance".into();
            break;
        }
        let mut step = None;
        let mut any_usable = false;
        for restart in [false, true] {
            if restart {
                inv = Matrix::identity(free.len(), free.len());
                d = -grad.clone();
                slope = grad.dot(&d);
            }
            let mut alpha = 1.0;
            while alpha > 1e-14 {
                let trial = &free + &d * alpha;
                if let Some(c) = sh.cost(&trial) {
                    any_usable = true;
                    if c <= cost + ARMIJO * alpha * slope {
                        step = Some((trial, c));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if step.is_some() {
                break;
            }
        }
        let Some((next, c)) = step else {
            if !any_usable {
                return Err(SweepError::Numerical(format!(
                    "every trial point failed to simulate after {iterations} accepted steps"
                )));
            }
            converged = -slope <= opts.stall_tol;
            message = format!("line search stalled with predicted decrease {:.3e}", -slope);
            break;
        };
        let g_next = sh.gradient(&next, c).ok_or_else(gradient_failure)?;
        let s = &next - &free;
        let y = &g_next - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let id = Matrix::identity(s.len(), s.len());
            let left = &id - &s * y.transpose() * rho;
            let right = &id - &y * s.transpose() * rho;
            inv = &left * &inv * &right + &s * s.transpose() * rho;
        }
        free = next;
        grad = g_next;
        cost = c;
        cost_trace.push(c);
        iterations += 1;
    }
    if !converged && message.is_empty() {
        message = format!("stopped after {iterations} iterations");
    }
    let u = sh.control(&free);
    let sim = simulate(&problem.system, &u)?;
    let decision = sh.decision(u, &sim);
    let dynamics_residual = inclusion_residual(&problem.system, &decision.x, &decision.u)?
        .into_iter()
        .fold(0.0f64, f64::max);
    let feas = sim.records.iter().fold(0.0f64, |a, r| a.max(r.feasibility));
    Ok(Solution {
        report: SolveReport {
            solver: SolverKind::Shooting,
            k,
            cost: cost_eval(problem, &decision)?,
            stationarity_residual: crate::linalg::inf_norm(&grad),
            complementarity_residual: 0.0,
            dynamics_residual,
            endpoint_violation: feas,
            localization_violation: localization_violation(problem, &decision),
            iterations,
            converged,
            stages: Vec::new(),
            cost_trace,
            message,
        },
        decision,
    })
}

fn gradient_failure() -> SweepError {
    SweepError::Numerical("finite-difference gradient failed on both sides".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Drift, StateMap, SweepingSystem};
    use crate::geometry::{FieldMap, ThetaSet};
    use crate::ocp::cost::{Breakpoints, MinimizerMode, RunningCost, RunningTerm, TerminalCost};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn halfline(x0: f64, u0: f64, horizon: f64, running: Vec<RunningTerm>, terminal: TerminalCost) -> OcpProblem {
        let field = FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0]));
        let sys =
            SweepingSystem::new(Drift::zero(1), StateMap::Identity, field, ThetaSet::orthant(1), v(&[x0]), horizon)
                .unwrap();
        OcpProblem::new(sys, v(&[u0]), terminal, RunningCost::Terms(running), MinimizerMode::W12xW12).unwrap()
    }

    /// Direct solution of the unconstrained problem
    /// `min h Σ_{j<k} ½((u_{j+1}−u_j)/h)² + ½(u_j − r_j)²` with `u_0` fixed.
    fn lq_oracle(k: usize, h: f64, u0: f64, r: impl Fn(f64) -> f64) -> Vec<f64> {
        // Stationarity in u_1..u_k: tridiagonal, with u_k touched only by the last rate term.
        let mut a = Matrix::zeros(k, k);
        let mut b = Vector::zeros(k);
        for i in 0..k {
            let j = i + 1;
            a[(i, i)] = if j < k { 2.0 / h + h } else { 1.0 / h };
            if i > 0 {
                a[(i, i - 1)] = -1.0 / h;
            }
            if i + 1 < k {
                a[(i, i + 1)] = -1.0 / h;
            }
            if j < k {
                b[i] = h * r(j as f64 * h);
            }
        }
        b[0] += u0 / h;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn matches_unconstrained_lq_oracle() {
        let k = 10;
        let reference = Breakpoints(vec![(0.0, vec![0.0]), (1.0, vec![1.0])]);
        let p = halfline(
            -100.0,
            0.3,
            1.0,
            vec![
                RunningTerm::ControlRateEnergy { weight: 1.0 },
                RunningTerm::ControlTracking {
                    weight: 0.5,
                    reference,
                },
            ],
            TerminalCost::Zero,
        );
        let guess = Path::constant(p.mesh(k).unwrap(), v(&[0.3]));
        let sol = solve_shooting(&p, k, &guess, &ShootingOptions::default()).unwrap();
        let oracle = lq_oracle(k, 0.1, 0.3, |t| t);
        for (j, want) in oracle.iter().enumerate() {
            let got = sol.decision.u.node(j + 1)[0];
            assert!((got - want).abs() < 1e-4, "node {}: {got} vs {want}", j + 1);
        }
        assert!(sol.report.monotone());
    }

    #[test]
    fn pinned_controls_return_the_simulation() {
        let field = FieldMap::linear(Matrix::identity(1, 1), Matrix::zeros(1, 0), v(&[0.0]));
        let sys = SweepingSystem::new(
            Drift::constant(v(&[0.5])),
            StateMap::Identity,
            field,
            ThetaSet::orthant(1),
            v(&[-1.0]),
            1.0,
        )
        .unwrap();
        let p = OcpProblem::new(
            sys,
            Vector::zeros(0),
            TerminalCost::Zero,
            RunningCost::Terms(vec![]),
            MinimizerMode::W12xW12,
        )
        .unwrap();
        let u = Path::constant(p.mesh(8).unwrap(), Vector::zeros(0));
        let sol = solve_shooting(&p, 8, &u, &ShootingOptions::default()).unwrap();
        let sim = simulate(&p.system, &u).unwrap();
        assert_eq!(sol.decision.x, sim.state);
        assert_eq!(sol.report.iterations, 0);
    }

    #[test]
    fn halfline_from_perturbed_reference() {
        let reference = Breakpoints(vec![(0.0, vec![-2.0]), (1.0, vec![-1.0]), (2.0, vec![-1.0])]);
        let p = halfline(
            1.5,
            -2.0,
            2.0,
            vec![RunningTerm::ControlTracking {
                weight: 1.0,
                reference: reference.clone(),
            }],
            TerminalCost::Quadratic {
                weight: 1.0,
                target: v(&[1.0]),
            },
        );
        let k = 50;
        let guess = Path::from_fn(p.mesh(k).unwrap(), |t| reference.eval(t).add_scalar(0.1));
        let sol = solve_shooting(&p, k, &guess, &ShootingOptions::default()).unwrap();
        assert!(sol.report.cost < 1e-4, "{}", sol.report.cost);
        assert!(sol.report.monotone());
    }
}
