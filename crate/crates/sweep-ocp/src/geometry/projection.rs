use std::cmp::Ordering;

use crate::error::{check_dim, Result, SweepError};
use crate::geometry::cone::{active_rows, ConeDecomposition};
use crate::geometry::field::{FieldKind, FieldMap};
use crate::geometry::qp::project_polyhedron;
use crate::geometry::theta::ThetaSet;
use crate::geometry::TOL_FEAS;
use crate::Vector;

/// Settings for [`project_onto_moving_set`].
#[derive(Clone, Debug)]
pub struct ProjectOptions {
    pub tol: f64,
    /// Starting points for the local projection used by nonlinear fields and
    /// smooth-inequality sets; ignored in the exact polyhedral case.
    pub warm_starts: Vec<Vector>,
    pub max_iter: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            tol: TOL_FEAS,
            warm_starts: Vec::new(),
            max_iter: 200,
        }
    }
}

impl ProjectOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn warm(mut self, start: Vector) -> Self {
        self.warm_starts.push(start);
        self
    }
}

/// Projection of `x` onto `C(u) = {y | ψ(y,u) ∈ Θ}` with the multiplier `η`
/// satisfying `x − y = ∇ₓψ(y,u)ᵀ η`.
///
/// Affine-in-x fields over polyhedral Θ are projected exactly. Otherwise a
/// sequence of linearized projections is run from each warm start (and from
/// `x` itself); the nearest result wins, ties going to the lexicographically
/// largest point.
pub fn project_onto_moving_set(
    field: &FieldMap,
    theta: &ThetaSet,
    u: &Vector,
    x: &Vector,
    opts: &ProjectOptions,
) -> Result<(Vector, ConeDecomposition)> {
    check_dim("projection point", field.n, x.len())?;
    check_dim("theta dimension", field.s, theta.dim())?;
    let tol = opts.tol;
    let z = field.value(x, u)?;
    if theta.contains(&z, tol) {
        let (act, _, _) = active_rows(theta, &z, tol);
        return Ok((
            x.clone(),
            ConeDecomposition {
                eta: Vector::zeros(field.s),
                active_indices: act,
                residual: 0.0,
            },
        ));
    }
    match (&field.kind, theta.halfspaces()) {
        (FieldKind::AffineInX(a), Some((r, rhs))) => {
            let coeff = (a.coeff)(u);
            let offset = (a.offset)(u);
            // R (A y − b) ≤ r
            let m = &r * &coeff;
            let c = &rhs + &r * &offset;
            let p = project_polyhedron(&m, &c, x, tol)?;
            let eta = r.transpose() * &p.multipliers;
            let residual = (coeff.transpose() * &eta - (x - &p.point)).norm();
            Ok((
                p.point,
                ConeDecomposition {
                    eta,
                    active_indices: p.active,
                    residual,
                },
            ))
        }
        _ => {
            let mut starts = opts.warm_starts.clone();
            starts.push(x.clone());
            let mut best: Option<(f64, Vector, ConeDecomposition)> = None;
            let mut last_err = None;
            for start in &starts {
                match local_projection(field, theta, u, x, start, opts) {
                    Ok((y, dec)) => {
                        let d = (&y - x).norm();
                        let better = match &best {
                            None => true,
                            Some((bd, by, _)) => {
                                if (d - bd).abs() <= 1e-9 * (1.0 + bd) {
                                    lex_cmp(&y, by) == Ordering::Greater
                                } else {
                                    d < *bd
                                }
                            }
                        };
                        if better {
                            best = Some((d, y, dec));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            match best {
                Some((_, y, dec)) => Ok((y, dec)),
                None => Err(last_err.unwrap_or_else(|| {
                    SweepError::Projection("no warm start produced a projection".into())
                })),
            }
        }
    }
}

fn lex_cmp(a: &Vector, b: &Vector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Sequential linearized projections: `y ← P_{linearized C at y}(x)`.
fn local_projection(
    field: &FieldMap,
    theta: &ThetaSet,
    u: &Vector,
    x: &Vector,
    start: &Vector,
    opts: &ProjectOptions,
) -> Result<(Vector, ConeDecomposition)> {
    check_dim("warm start", field.n, start.len())?;
    let tol = opts.tol;
    let mut y = start.clone();
    for _ in 0..opts.max_iter {
        let z = field.value(&y, u)?;
        let rows = theta.rows_at(&z);
        let jx = field.jac_x(&y, u)?;
        let m = &rows.jacobian * &jx;
        // G(y) + M (y' − y) ≤ 0
        let c = &m * &y - &rows.values;
        let p = project_polyhedron(&m, &c, x, tol * 1e-3)
            .map_err(|e| SweepError::Projection(format!("linearized subproblem: {e}")))?;
        let step = (&p.point - &y).norm();
        y = p.point;
        if step <= tol * (1.0 + y.norm()) {
            let z = field.value(&y, u)?;
            if !theta.contains(&z, tol) {
                return Err(SweepError::Projection("local projection stalled outside C(u)".into()));
            }
            let rows = theta.rows_at(&z);
            let eta = rows.jacobian.transpose() * &p.multipliers;
            let jx = field.jac_x(&y, u)?;
            let residual = (jx.transpose() * &eta - (x - &y)).norm();
            let (act, _, _) = active_rows(theta, &z, tol);
            return Ok((
                y,
                ConeDecomposition {
                    eta,
                    active_indices: act,
                    residual,
                },
            ));
        }
    }
    Err(SweepError::Numerical(format!(
        "local projection did not converge in {} iterations",
        opts.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Matrix, Vector};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn halfline() -> (FieldMap, ThetaSet) {
        (
            FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0])),
            ThetaSet::orthant(1),
        )
    }

    #[test]
    fn halfline_examples() {
        let (f, th) = halfline();
        let o = ProjectOptions::default();
        let (y, d) = project_onto_moving_set(&f, &th, &v(&[-1.0]), &v(&[2.0]), &o).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14 && (d.eta[0] - 1.0).abs() < 1e-14);
        let (y, d) = project_onto_moving_set(&f, &th, &v(&[-2.0]), &v(&[1.5]), &o).unwrap();
        assert_eq!(y[0], 1.5);
        assert_eq!(d.eta[0], 0.0);
    }

    #[test]
    fn nonconvex_tie_goes_to_largest() {
        let f = FieldMap::quadratic_example(1);
        let th = ThetaSet::boxed(v(&[0.0]), v(&[f64::INFINITY])).unwrap();
        let o = ProjectOptions::default().warm(v(&[-1.0])).warm(v(&[1.0]));
        let (y, d) = project_onto_moving_set(&f, &th, &v(&[0.5]), &v(&[0.0]), &o).unwrap();
        assert!((y[0] - 0.5f64.sqrt()).abs() < 1e-9, "{y}");
        // x − y = ∇ₓψ(y)ᵀ η with ∇ₓψ = 2y
        assert!((2.0 * y[0] * d.eta[0] - (0.0 - y[0])).abs() < 1e-9);
        assert!(d.eta[0] <= 0.0);
    }

    #[test]
    fn smooth_inequality_disk() {
        use crate::geometry::theta::SmoothInequality;
        use std::sync::Arc;
        // Θ = unit disk in R², ψ(x,u) = x − u.
        let disk = SmoothInequality::new(
            2,
            1,
            Arc::new(|z: &Vector| v(&[z.norm_squared() - 1.0])),
            Arc::new(|z: &Vector| Matrix::from_row_slice(1, 2, (z * 2.0).as_slice())),
            Arc::new(|_: &Vector, mu: &Vector| Matrix::identity(2, 2) * (2.0 * mu[0])),
        );
        let f = FieldMap::linear(Matrix::identity(2, 2), -Matrix::identity(2, 2), v(&[0.0, 0.0]));
        let th = ThetaSet::SmoothInequality(disk);
        let o = ProjectOptions::default().warm(v(&[0.0, 0.0]));
        let (y, d) = project_onto_moving_set(&f, &th, &v(&[0.0, 0.0]), &v(&[3.0, 4.0]), &o).unwrap();
        assert!((y - v(&[0.6, 0.8])).norm() < 1e-8);
        assert!(d.residual < 1e-8);
    }
}
