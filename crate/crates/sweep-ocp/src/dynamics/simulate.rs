use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SweepError};
use crate::geometry::{
    distance_to_cone, normal_cone_generators, project_onto_moving_set, ProjectOptions, TOL_FEAS,
};
use crate::{Matrix, Vector};

use super::path::Path;
use super::system::SweepingSystem;

/// Diagnostics of one catching-up step, recorded at the new node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub eta: Vector,
    pub projection_residual: f64,
    /// Largest constraint-row violation of `ψ(g(x_{j+1}), u_{j+1})`.
    pub feasibility: f64,
}

/// Which node carries the normal cone of a discrete step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeConvention {
    /// Cone at `(x_j, u_j)`, as in the explicit scheme.
    #[default]
    Left,
    /// Cone at `(x_{j+1}, u_{j+1})`, as produced by catching-up.
    Right,
}

/// Output of [`simulate`].
#[derive(Clone, Debug)]
pub struct Simulation {
    pub state: Path,
    pub records: Vec<StepRecord>,
}

/// Largest violation of the constraint rows of Θ at `ψ(g(x), u)`.
pub fn feasibility_violation(system: &SweepingSystem, x: &Vector, u: &Vector) -> Result<f64> {
    let z = system.effective_field().value(x, u)?;
    let rows = system.theta.rows_at(&z);
    let worst = rows.values.iter().fold(0.0f64, |a, &b| a.max(b));
    if system.theta.contains(&z, TOL_FEAS) {
        Ok(worst.min(TOL_FEAS))
    } else {
        Ok(worst.max(TOL_FEAS * 10.0))
    }
}

/// One catching-up step: project `x_j + h f(t_j, x_j)` onto `C(u_next)`.
pub fn step_catching_up(
    system: &SweepingSystem,
    x: &Vector,
    u_next: &Vector,
    t: f64,
    h: f64,
) -> Result<(Vector, StepRecord)> {
    check_dim("step state", system.n(), x.len())?;
    check_dim("step control", system.m(), u_next.len())?;
    let drifted = x + system.drift.value(t, x) * h;
    let opts = ProjectOptions::default().warm(x.clone());
    let (next, dec) = project_onto_moving_set(system.effective_field(), &system.theta, u_next, &drifted, &opts)?;
    let feasibility = feasibility_violation(system, &next, u_next)?;
    Ok((
        next,
        StepRecord {
            t: t + h,
            eta: dec.eta,
            projection_residual: dec.residual,
            feasibility,
        },
    ))
}

/// Catching-up trajectory driven by `control`; its mesh sets the step.
pub fn simulate(system: &SweepingSystem, control: &Path) -> Result<Simulation> {
    check_dim("control path", system.m(), control.dim())?;
    if (control.mesh.horizon - system.horizon).abs() > 1e-12 * system.horizon {
        return Err(SweepError::Config(format!(
            "control horizon {} differs from system horizon {}",
            control.mesh.horizon, system.horizon
        )));
    }
    let fail = |step, e| SweepError::Simulation {
        step,
        source: Box::new(e),
    };
    let v0 = feasibility_violation(system, &system.x0, control.node(0)).map_err(|e| fail(0, e))?;
    if v0 > TOL_FEAS {
        return Err(fail(
            0,
            SweepError::Precondition(format!("initial state is outside C(u_0) (violation {v0:.3e})")),
        ));
    }
    let mesh = control.mesh;
    let h = mesh.h();
    let mut values = Vec::with_capacity(mesh.k + 1);
    let mut records = Vec::with_capacity(mesh.k);
    values.push(system.x0.clone());
    for j in 0..mesh.k {
        let (next, rec) =
            step_catching_up(system, &values[j], control.node(j + 1), mesh.t(j), h).map_err(|e| fail(j, e))?;
        if rec.feasibility > TOL_FEAS {
            return Err(fail(
                j,
                SweepError::Projection(format!("step left the moving set (violation {:.3e})", rec.feasibility)),
            ));
        }
        values.push(next);
        records.push(rec);
    }
    Ok(Simulation {
        state: Path::new(mesh, values)?,
        records,
    })
}

/// Distance of each discrete velocity to the normal cone, cone at the right node.
pub fn inclusion_residual(system: &SweepingSystem, state: &Path, control: &Path) -> Result<Vec<f64>> {
    inclusion_residual_with(system, state, control, NodeConvention::Right)
}

/// Per-step distance from `(x_j − x_{j+1})/h + f(t_j, x_j)` to
/// `N(x; C(u))` at the node selected by `convention`; `+∞` when that node is
/// infeasible.
pub fn inclusion_residual_with(
    system: &SweepingSystem,
    state: &Path,
    control: &Path,
    convention: NodeConvention,
) -> Result<Vec<f64>> {
    if state.mesh != control.mesh {
        return Err(SweepError::Config("state and control paths must share a mesh".into()));
    }
    check_dim("state path", system.n(), state.dim())?;
    check_dim("control path", system.m(), control.dim())?;
    let field = system.effective_field();
    let h = state.h();
    let mut out = Vec::with_capacity(state.k());
    for j in 0..state.k() {
        let (xj, xn) = (state.node(j), state.node(j + 1));
        let v = (xj - xn) / h + system.drift.value(state.mesh.t(j), xj);
        let e = match convention {
            NodeConvention::Left => j,
            NodeConvention::Right => j + 1,
        };
        let (x, u) = (state.node(e), control.node(e));
        out.push(cone_distance(system, field, x, u, &v)?);
    }
    Ok(out)
}

fn cone_distance(
    system: &SweepingSystem,
    field: &crate::geometry::FieldMap,
    x: &Vector,
    u: &Vector,
    v: &Vector,
) -> Result<f64> {
    let z = field.value(x, u)?;
    if !system.theta.contains(&z, TOL_FEAS) {
        return Ok(f64::INFINITY);
    }
    let gens: Matrix = normal_cone_generators(&system.theta, &z, TOL_FEAS) * field.jac_x(x, u)?;
    Ok(distance_to_cone(&gens, v)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Drift, Mesh, StateMap};
    use crate::geometry::{FieldMap, ThetaSet};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn halfline(drift: Drift, x0: f64, horizon: f64) -> SweepingSystem {
        SweepingSystem::new(
            drift,
            StateMap::Identity,
            FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0])),
            ThetaSet::orthant(1),
            v(&[x0]),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn wall_steps() {
        let sys = halfline(Drift::zero(1), 1.5, 2.0);
        let (x, r) = step_catching_up(&sys, &v(&[1.5]), &v(&[-1.8]), 0.0, 0.1).unwrap();
        assert_eq!(x[0], 1.5);
        assert_eq!(r.eta[0], 0.0);
        let (x, r) = step_catching_up(&sys, &v(&[1.5]), &v(&[-1.4]), 0.0, 0.1).unwrap();
        assert!((x[0] - 1.4).abs() < 1e-15);
        assert!((r.eta[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pure_drift_step() {
        let sys = halfline(Drift::constant(v(&[1.0])), 0.0, 1.0);
        let (x, _) = step_catching_up(&sys, &v(&[0.0]), &v(&[-10.0]), 0.0, 0.1).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn infeasible_start_is_reported_at_step_zero() {
        let sys = halfline(Drift::zero(1), 1.5, 1.0);
        let u = Path::constant(Mesh::new(4, 1.0).unwrap(), v(&[-1.0]));
        match simulate(&sys, &u) {
            Err(SweepError::Simulation { step: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frozen_state_violates_inclusion() {
        let sys = halfline(Drift::zero(1), 1.5, 1.0);
        let mesh = Mesh::new(4, 1.0).unwrap();
        let u = Path::from_fn(mesh, |t| v(&[-1.5 + t]));
        let frozen = Path::constant(mesh, v(&[1.5]));
        let r = inclusion_residual(&sys, &frozen, &u).unwrap();
        assert!(r[0].is_infinite());
        let sim = simulate(&sys, &u).unwrap();
        assert!(inclusion_residual(&sys, &sim.state, &u).unwrap().iter().all(|&e| e <= 1e-8));
    }

    #[test]
    fn constant_interior_control_keeps_state() {
        let sys = halfline(Drift::zero(1), 1.5, 1.0);
        let u = Path::constant(Mesh::new(10, 1.0).unwrap(), v(&[-3.0]));
        let sim = simulate(&sys, &u).unwrap();
        assert!(sim.state.values.iter().all(|x| x[0] == 1.5));
    }
}
