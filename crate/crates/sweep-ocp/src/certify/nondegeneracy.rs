use serde::{Deserialize, Serialize};

use crate::error::{Result, SweepError};
use crate::geometry::cone::active_rows;
use crate::geometry::{coderivative_orthant_tol, CodClass, FieldMap, ThetaSet, TOL_FEAS};
use crate::linalg::{lstsq, rank, select, select_rows};
use crate::Vector;

use super::hamiltonian::require_surjective;
use super::TOL_POS;

/// Outcome of [`check_nondegeneracy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nondegeneracy {
    Nondegenerate,
    /// A nonzero `θ` satisfying both endpoint inclusions.
    Degenerate { witness: Vector },
}

impl Nondegeneracy {
    pub fn is_nondegenerate(&self) -> bool {
        matches!(self, Nondegeneracy::Nondegenerate)
    }
}

/// Decides whether `θ = 0` is the only solution of
/// `θ ∈ D*N_Θ(ψ(x_T,u_T), η_T)(0)` and `∇ψᵀθ ∈ −∇ψᵀ N_Θ(ψ(x_T,u_T))`.
///
/// With `∇ψ` surjective the second inclusion is `θ ∈ −N_Θ`. Writing
/// `θ = ∇G_Aᵀω` over the active rows `A` of Θ, the first inclusion classifies
/// each `ω_i` by the orthant table at direction `0`, and the second asks
/// `ω ≤ 0`. Only a free coordinate (`μ_i > 0`) admits `ω_i < 0`, which gives
/// the witness `θ = −∇G_i`.
pub fn check_nondegeneracy(field: &FieldMap, theta: &ThetaSet, x: &Vector, u: &Vector, eta: &Vector) -> Result<Nondegeneracy> {
    crate::error::check_dim("endpoint multiplier", field.s, eta.len())?;
    let z = field.value(x, u)?;
    if !theta.contains(&z, TOL_FEAS) {
        return Err(SweepError::Precondition(format!("ψ(x_T,u_T) = {:?} is not in Θ", z.as_slice())));
    }
    let jac = field.jac_full(x, u)?;
    require_surjective(&jac)?;
    let (act, g, jg) = active_rows(theta, &z, TOL_POS);
    let ga = select_rows(&jg, &act);
    if rank(&ga, 1e-10) < act.len() {
        return Err(SweepError::Config(
            "active constraint rows of Θ at the endpoint are linearly dependent".into(),
        ));
    }
    let mu = lstsq(&ga.transpose(), eta, 1e-12);
    let scale = 1.0 + eta.norm();
    if (ga.transpose() * &mu - eta).norm() > 1e-8 * scale || mu.iter().any(|&m| m < -1e-8 * scale) {
        return Err(SweepError::NotInCone("η_T is not a normal to Θ at ψ(x_T,u_T)".into()));
    }
    let classes = coderivative_orthant_tol(
        &select(&g, &act).map(|v| v.min(0.0)),
        &mu.map(|v| v.max(0.0)),
        &Vector::zeros(act.len()),
        TOL_POS,
    )?
    .expect("direction zero never empties the coderivative");
    Ok(match classes.iter().position(|c| *c == CodClass::Free) {
        Some(i) => Nondegeneracy::Degenerate {
            witness: -ga.row(i).transpose(),
        },
        None => Nondegeneracy::Nondegenerate,
    })
}
