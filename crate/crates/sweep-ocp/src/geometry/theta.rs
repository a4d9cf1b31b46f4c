use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result, SweepError};
use crate::geometry::qp::project_polyhedron;
use crate::{Matrix, Vector};

/// `z ↦ h(z)` for a smooth inequality set.
pub type SetFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// `z ↦ ∇h(z)` (l × s).
pub type SetJac = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// `(z, μ) ↦ ∇²⟨μ, h⟩(z)` (s × s).
pub type SetHess = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;

/// `Θ = {z ∈ R^s | h(z) ≤ 0}` with `h: R^s → R^l`.
#[derive(Clone)]
pub struct SmoothInequality {
    pub dim: usize,
    pub rows: usize,
    pub value: SetFn,
    pub jacobian: SetJac,
    pub hessian: SetHess,
}

impl SmoothInequality {
    pub fn new(dim: usize, rows: usize, value: SetFn, jacobian: SetJac, hessian: SetHess) -> Self {
        Self {
            dim,
            rows,
            value,
            jacobian,
            hessian,
        }
    }

    /// Affine `h(z) = G z − g`.
    pub fn affine(g_mat: Matrix, g_vec: Vector) -> Self {
        let dim = g_mat.ncols();
        let rows = g_mat.nrows();
        let gm = g_mat.clone();
        let gv = g_vec.clone();
        Self {
            dim,
            rows,
            value: Arc::new(move |z| &gm * z - &gv),
            jacobian: Arc::new(move |_| g_mat.clone()),
            hessian: Arc::new(move |_, _| Matrix::zeros(dim, dim)),
        }
    }
}

/// `Θ = A·Z` with `Z = {z | G z ≤ g}` given as a halfspace list.
#[derive(Clone, Debug)]
pub struct LinearImage {
    pub matrix: Matrix,
    pub generator_normals: Matrix,
    pub generator_offsets: Vector,
    normals: Matrix,
    spd: bool,
}

impl LinearImage {
    pub fn is_spd(&self) -> bool {
        self.spd
    }
}

/// The closed set Θ ⊂ R^s in `C(u) = {x | ψ(x,u) ∈ Θ}`.
#[derive(Clone)]
pub enum ThetaSet {
    NonpositiveOrthant { dim: usize },
    /// Per-coordinate bounds; infinite entries are allowed.
    Box { lower: Vector, upper: Vector },
    SmoothInequality(SmoothInequality),
    LinearImagePolyhedron(LinearImage),
}

impl fmt::Debug for ThetaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaSet::NonpositiveOrthant { dim } => write!(f, "NonpositiveOrthant({dim})"),
            ThetaSet::Box { lower, upper } => write!(
                f,
                "Box(lower={:?}, upper={:?})",
                lower.as_slice(),
                upper.as_slice()
            ),
            ThetaSet::SmoothInequality(s) => write!(f, "SmoothInequality(s={}, l={})", s.dim, s.rows),
            ThetaSet::LinearImagePolyhedron(p) => write!(
                f,
                "LinearImagePolyhedron(s={}, halfspaces={})",
                p.matrix.nrows(),
                p.generator_normals.nrows()
            ),
        }
    }
}

/// Constraint rows `G(z) ≤ 0` describing Θ near a point, with `∇G(z)`.
#[derive(Clone, Debug)]
pub struct ThetaRows {
    pub values: Vector,
    pub jacobian: Matrix,
}

impl ThetaSet {
    pub fn orthant(dim: usize) -> Self {
        ThetaSet::NonpositiveOrthant { dim }
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(Vector::from_vec(vec![lower]), Vector::from_vec(vec![upper]))
    }

    pub fn boxed(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        for i in 0..lower.len() {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] >= upper[i] {
                return Err(SweepError::Config(format!(
                    "box coordinate {i} needs lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(ThetaSet::Box { lower, upper })
    }

    /// `A·Z` for invertible `A`.
    pub fn linear_image(a: Matrix, normals: Matrix, offsets: Vector) -> Result<Self> {
        Self::build_linear_image(a, normals, offsets, false)
    }

    /// `A·Z` for symmetric positive definite `A` (the elastoplastic setting).
    pub fn linear_image_spd(a: Matrix, normals: Matrix, offsets: Vector) -> Result<Self> {
        Self::build_linear_image(a, normals, offsets, true)
    }

    fn build_linear_image(a: Matrix, normals: Matrix, offsets: Vector, require_spd: bool) -> Result<Self> {
        let s = a.nrows();
        check_dim("linear image matrix columns", s, a.ncols())?;
        check_dim("halfspace normals", s, normals.ncols())?;
        check_dim("halfspace offsets", normals.nrows(), offsets.len())?;
        let symmetric = (&a - a.transpose()).amax() <= 1e-12 * (1.0 + a.amax());
        let spd = symmetric && a.clone().cholesky().is_some();
        if require_spd && !spd {
            return Err(SweepError::Config(
                "linear image matrix must be symmetric positive definite".into(),
            ));
        }
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| SweepError::Config("linear image matrix is singular".into()))?;
        let rows = &normals * inv;
        Ok(ThetaSet::LinearImagePolyhedron(LinearImage {
            matrix: a,
            generator_normals: normals,
            generator_offsets: offsets,
            normals: rows,
            spd,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            ThetaSet::NonpositiveOrthant { dim } => *dim,
            ThetaSet::Box { lower, .. } => lower.len(),
            ThetaSet::SmoothInequality(s) => s.dim,
            ThetaSet::LinearImagePolyhedron(p) => p.matrix.nrows(),
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        !matches!(self, ThetaSet::SmoothInequality(_))
    }

    pub fn is_orthant(&self) -> bool {
        matches!(self, ThetaSet::NonpositiveOrthant { .. })
    }

    /// Halfspace form `{z | R z ≤ r}` for the polyhedral variants.
    pub fn halfspaces(&self) -> Option<(Matrix, Vector)> {
        match self {
            ThetaSet::NonpositiveOrthant { dim } => Some((Matrix::identity(*dim, *dim), Vector::zeros(*dim))),
            ThetaSet::Box { lower, upper } => {
                let s = lower.len();
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for i in 0..s {
                    if upper[i].is_finite() {
                        let mut r = vec![0.0; s];
                        r[i] = 1.0;
                        rows.push(r);
                        rhs.push(upper[i]);
                    }
                    if lower[i].is_finite() {
                        let mut r = vec![0.0; s];
                        r[i] = -1.0;
                        rows.push(r);
                        rhs.push(-lower[i]);
                    }
                }
                let m = Matrix::from_fn(rows.len(), s, |i, j| rows[i][j]);
                Some((m, Vector::from_vec(rhs)))
            }
            ThetaSet::LinearImagePolyhedron(p) => Some((p.normals.clone(), p.generator_offsets.clone())),
            ThetaSet::SmoothInequality(_) => None,
        }
    }

    /// Rows `G(z) ≤ 0` and their Jacobian at `z`.
    pub fn rows_at(&self, z: &Vector) -> ThetaRows {
        match self {
            ThetaSet::SmoothInequality(s) => ThetaRows {
                values: (s.value)(z),
                jacobian: (s.jacobian)(z),
            },
            _ => {
                let (r, rhs) = self.halfspaces().expect("polyhedral variant");
                ThetaRows {
                    values: &r * z - rhs,
                    jacobian: r,
                }
            }
        }
    }

    /// Second-order term `∇²⟨μ, G⟩(z)`; zero for polyhedral variants.
    pub fn row_hessian(&self, z: &Vector, mu: &Vector) -> Matrix {
        match self {
            ThetaSet::SmoothInequality(s) => (s.hessian)(z, mu),
            _ => Matrix::zeros(z.len(), z.len()),
        }
    }

    /// Membership within `tol`.
    ///
    /// Orthant and box use a coordinatewise band, smooth inequalities test
    /// `h(z) ≤ tol`, and linear images test the Euclidean distance.
    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            ThetaSet::NonpositiveOrthant { .. } => z.iter().all(|&v| v <= tol),
            ThetaSet::Box { lower, upper } => {
                (0..z.len()).all(|i| z[i] >= lower[i] - tol && z[i] <= upper[i] + tol)
            }
            ThetaSet::SmoothInequality(s) => (s.value)(z).iter().all(|&v| v <= tol),
            ThetaSet::LinearImagePolyhedron(_) => {
                let (r, rhs) = self.halfspaces().expect("polyhedral variant");
                if (&r * z - &rhs).iter().all(|&v| v <= 0.0) {
                    return true;
                }
                match project_polyhedron(&r, &rhs, z, 1e-12) {
                    Ok(p) => (p.point - z).norm() <= tol,
                    Err(_) => false,
                }
            }
        }
    }
}

/// Membership test `z ∈ Θ` within `tol`.
pub fn theta_contains(theta: &ThetaSet, z: &Vector, tol: f64) -> bool {
    theta.contains(z, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn orthant_membership() {
        let th = ThetaSet::orthant(2);
        assert!(th.contains(&v(&[-1.0, 0.0]), 1e-9));
        assert!(th.contains(&v(&[1e-12, -3.0]), 1e-9));
        assert!(!th.contains(&v(&[1e-6, -3.0]), 1e-9));
        assert!(!th.contains(&v(&[-1.0]), 1e-9));
    }

    #[test]
    fn smooth_inequality_membership() {
        let th = ThetaSet::SmoothInequality(SmoothInequality::affine(
            Matrix::from_element(1, 1, 1.0),
            v(&[1.0]),
        ));
        assert!(!th.contains(&v(&[2.0]), 1e-9));
        assert!(th.contains(&v(&[0.5]), 1e-9));
    }

    #[test]
    fn box_halfspaces_skip_infinite_bounds() {
        let th = ThetaSet::boxed(v(&[0.0, f64::NEG_INFINITY]), v(&[f64::INFINITY, 2.0])).unwrap();
        let (r, rhs) = th.halfspaces().unwrap();
        assert_eq!(r.nrows(), 2);
        assert_eq!(rhs, v(&[0.0, 2.0]));
        assert!(th.contains(&v(&[5.0, -100.0]), 0.0));
        assert!(!th.contains(&v(&[-0.1, 0.0]), 1e-9));
        assert!(ThetaSet::interval(1.0, 1.0).is_err());
    }

    #[test]
    fn linear_image_uses_distance() {
        let th = ThetaSet::linear_image_spd(
            Matrix::from_element(1, 1, 2.0),
            Matrix::from_row_slice(2, 1, &[1.0, -1.0]),
            v(&[1.0, 1.0]),
        )
        .unwrap();
        // Θ = 2·[-1,1] = [-2,2]
        assert!(th.contains(&v(&[2.0]), 1e-12));
        assert!(th.contains(&v(&[2.0 + 1e-10]), 1e-9));
        assert!(!th.contains(&v(&[2.1]), 1e-9));
        let not_spd = ThetaSet::linear_image_spd(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            Matrix::identity(2, 2),
            v(&[1.0, 1.0]),
        );
        assert!(not_spd.is_err());
    }
}
