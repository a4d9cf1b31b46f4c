use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SweepError};
use crate::geometry::field::FieldMap;
use crate::geometry::qp::project_polyhedron;
use crate::geometry::theta::ThetaSet;
use crate::geometry::{RANK_REL_TOL, TOL_FEAS};
use crate::linalg::{lstsq, select, select_rows, singular_values};
use crate::{Matrix, Vector};

/// Outcome of [`surjectivity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Surjectivity {
    Ok(f64),
    RankDeficient,
}

impl Surjectivity {
    pub fn is_ok(&self) -> bool {
        matches!(self, Surjectivity::Ok(_))
    }
}

/// Full row rank test for an s × n Jacobian: ok iff `σ_min ≥ tol`.
pub fn surjectivity_check(jacobian: &Matrix, tol: f64) -> Surjectivity {
    let (s, n) = jacobian.shape();
    if s > n {
        return Surjectivity::RankDeficient;
    }
    if s == 0 {
        return Surjectivity::Ok(f64::INFINITY);
    }
    let sv = singular_values(jacobian);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin >= tol && smin > 0.0 {
        Surjectivity::Ok(smin)
    } else {
        Surjectivity::RankDeficient
    }
}

/// [`surjectivity_check`] with the relative threshold `1e-8 · σ_max`.
pub fn surjectivity_check_relative(jacobian: &Matrix) -> Surjectivity {
    let smax = singular_values(jacobian).first().copied().unwrap_or(0.0);
    surjectivity_check(jacobian, RANK_REL_TOL * smax)
}

/// `η` with `∇ₓψ(x,u)ᵀ η = v` and `η ∈ N_Θ(ψ(x,u))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeDecomposition {
    pub eta: Vector,
    /// Indices of active constraint rows of Θ at `ψ(x,u)`; for the orthant
    /// these are the indices `i` with `ψ_i(x,u) = 0`.
    pub active_indices: Vec<usize>,
    pub residual: f64,
}

/// Constraint rows of Θ at `z`, with indices of those active within `tol`.
pub(crate) fn active_rows(theta: &ThetaSet, z: &Vector, tol: f64) -> (Vec<usize>, Vector, Matrix) {
    let rows = theta.rows_at(z);
    let act = (0..rows.values.len())
        .filter(|&i| rows.values[i] >= -tol)
        .collect();
    (act, rows.values, rows.jacobian)
}

/// Decompose `v ∈ N(x; C(u))` as `∇ₓψ(x,u)ᵀ η` with `η ∈ N_Θ(ψ(x,u))`.
pub fn normal_cone_decompose(
    field: &FieldMap,
    theta: &ThetaSet,
    x: &Vector,
    u: &Vector,
    v: &Vector,
    tol: f64,
) -> Result<ConeDecomposition> {
    check_dim("normal vector", field.n, v.len())?;
    check_dim("theta dimension", field.s, theta.dim())?;
    let z = field.value(x, u)?;
    if !theta.contains(&z, tol) {
        return Err(SweepError::Precondition(format!(
            "ψ(x,u) = {:?} is not in Θ",
            z.as_slice()
        )));
    }
    let jx = field.jac_x(x, u)?;
    if let Surjectivity::RankDeficient = surjectivity_check_relative(&jx) {
        let sv = singular_values(&jx);
        return Err(SweepError::Surjectivity {
            sigma_min: if jx.nrows() > jx.ncols() { 0.0 } else { sv.last().copied().unwrap_or(0.0) },
        });
    }
    let (act, _, jg) = active_rows(theta, &z, tol);
    let ja = select_rows(&jg, &act);
    // v = (J_G,act ∇ₓψ)ᵀ μ
    let gens = &ja * &jx;
    let mu = lstsq(&gens.transpose(), v, 1e-12);
    let residual = (gens.transpose() * &mu - v).norm();
    let scale = 1.0 + v.norm();
    if residual > tol.max(1e-10) * scale * 10.0 {
        return Err(SweepError::NotInCone(format!(
            "v is not spanned by the active rows (residual {residual:.3e})"
        )));
    }
    if let Some(k) = (0..mu.len()).find(|&k| mu[k] < -tol * scale) {
        return Err(SweepError::NotInCone(format!(
            "multiplier of row {} is {:.3e} < 0",
            act[k], mu[k]
        )));
    }
    let eta = ja.transpose() * &mu;
    Ok(ConeDecomposition {
        eta,
        active_indices: act,
        residual,
    })
}

/// Per-coordinate description of `D*N_{R^s_-}(w, ξ)(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodClass {
    MustBeZero,
    Nonnegative,
    Free,
}

impl CodClass {
    /// Distance from `omega` to the allowed set.
    pub fn distance(&self, omega: f64) -> f64 {
        match self {
            CodClass::MustBeZero => omega.abs(),
            CodClass::Nonnegative => (-omega).max(0.0),
            CodClass::Free => 0.0,
        }
    }
}

/// Coderivative of the orthant normal-cone map; `Ok(None)` is the empty set.
pub fn coderivative_orthant(w: &Vector, xi: &Vector, udir: &Vector) -> Result<Option<Vec<CodClass>>> {
    coderivative_orthant_tol(w, xi, udir, TOL_FEAS)
}

/// [`coderivative_orthant`] with an explicit zero band.
pub fn coderivative_orthant_tol(
    w: &Vector,
    xi: &Vector,
    udir: &Vector,
    tol: f64,
) -> Result<Option<Vec<CodClass>>> {
    check_dim("coderivative multiplier", w.len(), xi.len())?;
    check_dim("coderivative direction", w.len(), udir.len())?;
    let mut out = Vec::with_capacity(w.len());
    let mut empty = false;
    for i in 0..w.len() {
        let w_neg = w[i] < -tol;
        let w_zero = w[i].abs() <= tol;
        let xi_zero = xi[i].abs() <= tol;
        let xi_pos = xi[i] > tol;
        let u_zero = udir[i].abs() <= tol;
        if !(w_neg || w_zero) || xi[i] < -tol || (w_neg && !xi_zero) {
            return Err(SweepError::Domain { index: i });
        }
        let class = if w_neg {
            CodClass::MustBeZero
        } else if xi_zero {
            if udir[i] < -tol {
                CodClass::MustBeZero
            } else {
                CodClass::Nonnegative
            }
        } else {
            debug_assert!(xi_pos);
            if u_zero {
                CodClass::Free
            } else {
                empty = true;
                CodClass::Free
            }
        };
        out.push(class);
    }
    Ok(if empty { None } else { Some(out) })
}

/// Distance of `nu` from `D*N_Θ(z, η)(dir)`, or `+∞` when that set is empty.
///
/// Polyhedral and smooth-inequality sets are reduced to the orthant through
/// their active rows `G`, using `D*N_Θ(z,η)(w) = ∇²⟨μ,G⟩(z)w + ∇G(z)ᵀ D*N_{R_-}(G(z),μ)(∇G(z)w)`
/// with `η = ∇G(z)ᵀ μ`.
pub fn coderivative_distance(
    theta: &ThetaSet,
    z: &Vector,
    eta: &Vector,
    dir: &Vector,
    nu: &Vector,
    tol: f64,
) -> Result<f64> {
    let s = theta.dim();
    check_dim("coderivative point", s, z.len())?;
    check_dim("coderivative multiplier", s, eta.len())?;
    check_dim("coderivative direction", s, dir.len())?;
    check_dim("coderivative element", s, nu.len())?;
    if let ThetaSet::NonpositiveOrthant { .. } = theta {
        return Ok(match coderivative_orthant_tol(z, eta, dir, tol)? {
            None => f64::INFINITY,
            Some(cls) => cls.iter().zip(nu.iter()).map(|(c, &o)| c.distance(o)).sum(),
        });
    }
    let (act, g, jg) = active_rows(theta, z, tol);
    let ja = select_rows(&jg, &act);
    let mu = lstsq(&ja.transpose(), eta, 1e-12);
    if (ja.transpose() * &mu - eta).norm() > tol.max(1e-10) * (1.0 + eta.norm()) * 10.0 {
        return Err(SweepError::Domain { index: 0 });
    }
    let mut mu_full = Vector::zeros(g.len());
    for (k, &i) in act.iter().enumerate() {
        mu_full[i] = mu[k];
    }
    let target = nu - theta.row_hessian(z, &mu_full) * dir;
    let omega = lstsq(&ja.transpose(), &target, 1e-12);
    let span_resid = (ja.transpose() * &omega - &target).norm();
    let cls = coderivative_orthant_tol(&select(&g, &act), &mu, &(&ja * dir), tol)?;
    Ok(match cls {
        None => f64::INFINITY,
        Some(cls) => span_resid + cls.iter().zip(omega.iter()).map(|(c, &o)| c.distance(o)).sum::<f64>(),
    })
}

/// Distance from `r` to the cone `{Gᵀ μ | μ ≥ 0}` spanned by the rows of `gens`,
/// with the multipliers of the nearest point.
pub fn distance_to_cone(gens: &Matrix, r: &Vector) -> Result<(f64, Vector)> {
    check_dim("cone generators", r.len(), gens.ncols())?;
    if gens.nrows() == 0 {
        return Ok((r.norm(), Vector::zeros(0)));
    }
    // Moreau: r = P_K(r) + P_{K°}(r) with K° = {y | G y ≤ 0}.
    let polar = project_polyhedron(gens, &Vector::zeros(gens.nrows()), r, 1e-13)?;
    Ok((polar.point.norm(), polar.multipliers))
}

/// Generators of `N_Θ(z)` as rows (active rows of `∇G(z)`).
pub fn normal_cone_generators(theta: &ThetaSet, z: &Vector, tol: f64) -> Matrix {
    let (act, _, jg) = active_rows(theta, z, tol);
    select_rows(&jg, &act)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn surjectivity_examples() {
        assert_eq!(surjectivity_check(&Matrix::identity(2, 2), 1e-8), Surjectivity::Ok(1.0));
        match surjectivity_check(&Matrix::from_row_slice(1, 2, &[1.0, 1.0]), 1e-8) {
            Surjectivity::Ok(s) => assert!((s - 2f64.sqrt()).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
        assert_eq!(surjectivity_check(&Matrix::zeros(1, 2), 1e-8), Surjectivity::RankDeficient);
        assert_eq!(surjectivity_check(&Matrix::zeros(3, 2), 1e-8), Surjectivity::RankDeficient);
    }

    #[test]
    fn decomposition_examples() {
        let f = FieldMap::polyhedral(2, 2);
        let th = ThetaSet::orthant(2);
        let u = v(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let d = normal_cone_decompose(&f, &th, &v(&[1.0, 1.0]), &u, &v(&[2.0, 3.0]), 1e-9).unwrap();
        assert!((d.eta - v(&[2.0, 3.0])).norm() < 1e-12);
        assert_eq!(d.active_indices, vec![0, 1]);

        let line = FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0]));
        let th1 = ThetaSet::orthant(1);
        let d = normal_cone_decompose(&line, &th1, &v(&[1.5]), &v(&[-2.0]), &v(&[0.0]), 1e-9).unwrap();
        assert_eq!(d.eta[0], 0.0);
        assert!(d.active_indices.is_empty());
        let err = normal_cone_decompose(&line, &th1, &v(&[1.0]), &v(&[-1.0]), &v(&[-1.0]), 1e-9);
        assert!(matches!(err, Err(SweepError::NotInCone(_))));
    }

    #[test]
    fn coderivative_examples() {
        let one = |a: f64, b: f64, c: f64| coderivative_orthant(&v(&[a]), &v(&[b]), &v(&[c]));
        assert_eq!(one(-1.0, 0.0, 5.0).unwrap(), Some(vec![CodClass::MustBeZero]));
        assert_eq!(one(0.0, 0.0, 1.0).unwrap(), Some(vec![CodClass::Nonnegative]));
        assert_eq!(one(0.0, 2.0, 0.0).unwrap(), Some(vec![CodClass::Free]));
        assert_eq!(one(0.0, 2.0, 1.0).unwrap(), None);
        assert!(matches!(one(0.0, -1.0, 0.0), Err(SweepError::Domain { index: 0 })));
        assert!(matches!(one(-1.0, 1.0, 0.0), Err(SweepError::Domain { .. })));
    }

    #[test]
    fn box_coderivative_mirrors_lower_face() {
        let th = ThetaSet::interval(-1.0, 1.0).unwrap();
        // Lower face, η = 0, direction pointing inward (negative in z):
        // mirrored orthant gives ν ≤ 0.
        let d_neg = coderivative_distance(&th, &v(&[-1.0]), &v(&[0.0]), &v(&[-1.0]), &v(&[-2.0]), 1e-9).unwrap();
        assert_eq!(d_neg, 0.0);
        let d_pos = coderivative_distance(&th, &v(&[-1.0]), &v(&[0.0]), &v(&[-1.0]), &v(&[2.0]), 1e-9).unwrap();
        assert!((d_pos - 2.0).abs() < 1e-12);
        // Interior point: only ν = 0.
        let d = coderivative_distance(&th, &v(&[0.0]), &v(&[0.0]), &v(&[3.0]), &v(&[0.5]), 1e-9).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cone_distance() {
        let gens = Matrix::identity(2, 2);
        let (d, mu) = distance_to_cone(&gens, &v(&[1.0, -2.0])).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert!((mu[0] - 1.0).abs() < 1e-12 && mu[1].abs() < 1e-12);
        let (d0, _) = distance_to_cone(&Matrix::zeros(0, 2), &v(&[3.0, 4.0])).unwrap();
        assert_eq!(d0, 5.0);
    }
}
