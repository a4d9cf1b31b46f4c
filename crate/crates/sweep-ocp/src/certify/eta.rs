use crate::dynamics::{NodeConvention, Path, SweepingSystem};
use crate::error::{check_dim, Result, SweepError};
use crate::geometry::normal_cone_decompose;
use crate::{Matrix, Vector};

/// Mesh node whose data enter the relations of interval `j`.
pub(crate) fn anchor_node(convention: NodeConvention, j: usize) -> usize {
    match convention {
        NodeConvention::Left => j,
        NodeConvention::Right => j + 1,
    }
}

/// Field data at one node.
pub(crate) struct Frame {
    pub x: Vector,
    pub u: Vector,
    pub z: Vector,
    pub jx: Matrix,
    pub jfull: Matrix,
}

pub(crate) fn frame(system: &SweepingSystem, x: &Path, u: &Path, node: usize) -> Result<Frame> {
    let field = system.effective_field();
    let (xn, un) = (x.node(node).clone(), u.node(node).clone());
    Ok(Frame {
        z: field.value(&xn, &un)?,
        jx: field.jac_x(&xn, &un)?,
        jfull: field.jac_full(&xn, &un)?,
        x: xn,
        u: un,
    })
}

pub(crate) fn check_pair(system: &SweepingSystem, state: &Path, control: &Path) -> Result<()> {
    check_dim("state dimension", system.n(), state.dim())?;
    check_dim("control dimension", system.m(), control.dim())?;
    if state.mesh != control.mesh {
        return Err(SweepError::Config("state and control live on different meshes".into()));
    }
    Ok(())
}

/// Per-interval multipliers `η_j ∈ N_Θ(ψ(x_j,u_j))` with
/// `∇ₓψ(x_j,u_j)ᵀ η_j = f(t_j,x_j) − (x_{j+1} − x_j)/h`, cone taken at the
/// left node, tolerance `1e-8`.
pub fn recover_eta(system: &SweepingSystem, state: &Path, control: &Path) -> Result<Vec<Vector>> {
    recover_eta_with(system, state, control, NodeConvention::Left, 1e-8)
}

/// [`recover_eta`] with an explicit node convention and tolerance.
pub fn recover_eta_with(
    system: &SweepingSystem,
    state: &Path,
    control: &Path,
    convention: NodeConvention,
    tol: f64,
) -> Result<Vec<Vector>> {
    check_pair(system, state, control)?;
    let mesh = state.mesh;
    (0..mesh.k)
        .map(|j| {
            let node = anchor_node(convention, j);
            let v = system.drift.value(mesh.t(j), state.node(j)) - state.slope(j);
            normal_cone_decompose(system.effective_field(), &system.theta, state.node(node), control.node(node), &v, tol)
                .map(|d| d.eta)
                .map_err(|e| match e {
                    SweepError::NotInCone(msg) => SweepError::NotInCone(format!("interval {j}: {msg}")),
                    SweepError::Precondition(msg) => SweepError::Precondition(format!("interval {j}: {msg}")),
                    other => other,
                })
        })
        .collect()
}
