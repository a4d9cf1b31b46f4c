use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result};
use crate::{Matrix, Vector};

/// `u ↦ matrix`.
pub type ControlMatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// `u ↦ vector`.
pub type ControlVectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// `(x, u) ↦ vector`.
pub type PairVectorFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
/// `(x, u) ↦ matrix`.
pub type PairMatrixFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;
/// `(x, u, p) ↦ ∇²⟨p, ψ⟩(x, u)`, an (n+m) × (n+m) matrix.
pub type HessianFn = Arc<dyn Fn(&Vector, &Vector, &Vector) -> Matrix + Send + Sync>;

/// Rows `ψ_i(x,u) = a_i(u)·x − b_i(u)`.
#[derive(Clone)]
pub struct AffineInX {
    pub coeff: ControlMatrixFn,
    pub offset: ControlVectorFn,
    pub jac_u: PairMatrixFn,
    pub hessian: HessianFn,
}

/// General smooth `ψ` given by callbacks.
#[derive(Clone)]
pub struct NonlinearSmooth {
    pub value: PairVectorFn,
    pub jac_x: PairMatrixFn,
    pub jac_u: PairMatrixFn,
    pub hessian: HessianFn,
}

#[derive(Clone)]
pub enum FieldKind {
    AffineInX(AffineInX),
    NonlinearSmooth(NonlinearSmooth),
}

/// The map `ψ: R^n × R^m → R^s` defining the moving set.
#[derive(Clone)]
pub struct FieldMap {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub kind: FieldKind,
}

impl fmt::Debug for FieldMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FieldKind::AffineInX(_) => "AffineInX",
            FieldKind::NonlinearSmooth(_) => "NonlinearSmooth",
        };
        write!(f, "FieldMap::{kind}(n={}, m={}, s={})", self.n, self.m, self.s)
    }
}

impl FieldMap {
    pub fn affine_in_x(n: usize, m: usize, s: usize, rows: AffineInX) -> Self {
        Self {
            n,
            m,
            s,
            kind: FieldKind::AffineInX(rows),
        }
    }

    pub fn nonlinear(n: usize, m: usize, s: usize, f: NonlinearSmooth) -> Self {
        Self {
            n,
            m,
            s,
            kind: FieldKind::NonlinearSmooth(f),
        }
    }

    /// `ψ(x,u) = A x + B u + c` with constant matrices.
    pub fn linear(a: Matrix, b: Matrix, c: Vector) -> Self {
        let (s, n, m) = (a.nrows(), a.ncols(), b.ncols());
        assert_eq!(b.nrows(), s, "linear field: B rows");
        assert_eq!(c.len(), s, "linear field: offset length");
        let a1 = a.clone();
        let b1 = b.clone();
        Self::affine_in_x(
            n,
            m,
            s,
            AffineInX {
                coeff: Arc::new(move |_| a1.clone()),
                offset: Arc::new(move |u| -(&b1 * u + &c)),
                jac_u: Arc::new(move |_, _| b.clone()),
                hessian: Arc::new(move |_, _, _| Matrix::zeros(n + m, n + m)),
            },
        )
    }

    /// Polyhedral rows with fixed normals: `ψ(x, b) = R x − b`, control `b ∈ R^s`.
    pub fn polyhedral_fixed_rows(rows: Matrix) -> Self {
        let s = rows.nrows();
        Self::linear(rows, -Matrix::identity(s, s), Vector::zeros(s))
    }

    /// Fully controlled polyhedron `ψ_i(x,(u,b)) = ⟨x, u_i⟩ − b_i`.
    ///
    /// The control stacks the normals `u_1, …, u_s` followed by `b`, so `m = s·n + s`.
    pub fn polyhedral(n: usize, s: usize) -> Self {
        let m = s * n + s;
        Self::affine_in_x(
            n,
            m,
            s,
            AffineInX {
                coeff: Arc::new(move |u| Matrix::from_fn(s, n, |i, j| u[i * n + j])),
                offset: Arc::new(move |u| Vector::from_fn(s, |i, _| u[s * n + i])),
                jac_u: Arc::new(move |x, _| {
                    let mut j = Matrix::zeros(s, m);
                    for i in 0..s {
                        for k in 0..n {
                            j[(i, i * n + k)] = x[k];
                        }
                        j[(i, s * n + i)] = -1.0;
                    }
                    j
                }),
                hessian: Arc::new(move |_, _, p| {
                    let mut h = Matrix::zeros(n + m, n + m);
                    for i in 0..s {
                        for k in 0..n {
                            h[(k, n + i * n + k)] = p[i];
                            h[(n + i * n + k, k)] = p[i];
                        }
                    }
                    h
                }),
            },
        )
    }

    /// `ψ(x,u) = ‖x‖² + u − 1` with scalar control; the nonconvex example.
    pub fn quadratic_example(n: usize) -> Self {
        Self::nonlinear(
            n,
            1,
            1,
            NonlinearSmooth {
                value: Arc::new(|x, u| Vector::from_vec(vec![x.norm_squared() + u[0] - 1.0])),
                jac_x: Arc::new(|x, _| Matrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())),
                jac_u: Arc::new(|_, _| Matrix::from_element(1, 1, 1.0)),
                hessian: Arc::new(move |_, _, p| {
                    let mut h = Matrix::zeros(n + 1, n + 1);
                    for k in 0..n {
                        h[(k, k)] = 2.0 * p[0];
                    }
                    h
                }),
            },
        )
    }

    pub fn is_affine_in_x(&self) -> bool {
        matches!(self.kind, FieldKind::AffineInX(_))
    }

    fn check(&self, x: &Vector, u: &Vector) -> Result<()> {
        check_dim("field state", self.n, x.len())?;
        check_dim("field control", self.m, u.len())
    }

    /// `ψ(x,u)`.
    pub fn value(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.check(x, u)?;
        Ok(match &self.kind {
            FieldKind::AffineInX(a) => (a.coeff)(u) * x - (a.offset)(u),
            FieldKind::NonlinearSmooth(f) => (f.value)(x, u),
        })
    }

    /// `∇ₓψ(x,u)`, s × n.
    pub fn jac_x(&self, x: &Vector, u: &Vector) -> Result<Matrix> {
        self.check(x, u)?;
        Ok(match &self.kind {
            FieldKind::AffineInX(a) => (a.coeff)(u),
            FieldKind::NonlinearSmooth(f) => (f.jac_x)(x, u),
        })
    }

    /// `∇ᵤψ(x,u)`, s × m.
    pub fn jac_u(&self, x: &Vector, u: &Vector) -> Result<Matrix> {
        self.check(x, u)?;
        Ok(match &self.kind {
            FieldKind::AffineInX(a) => (a.jac_u)(x, u),
            FieldKind::NonlinearSmooth(f) => (f.jac_u)(x, u),
        })
    }

    /// `∇ψ(x,u) = [∇ₓψ | ∇ᵤψ]`, s × (n+m).
    pub fn jac_full(&self, x: &Vector, u: &Vector) -> Result<Matrix> {
        Ok(crate::linalg::hstack(&self.jac_x(x, u)?, &self.jac_u(x, u)?))
    }

    /// `∇²⟨p, ψ⟩(x,u)`, (n+m) × (n+m).
    pub fn hessian(&self, x: &Vector, u: &Vector, p: &Vector) -> Result<Matrix> {
        self.check(x, u)?;
        check_dim("hessian weight", self.s, p.len())?;
        Ok(match &self.kind {
            FieldKind::AffineInX(a) => (a.hessian)(x, u, p),
            FieldKind::NonlinearSmooth(f) => (f.hessian)(x, u, p),
        })
    }

    /// Largest relative mismatch between the Jacobian callbacks and forward
    /// differences of the value at `(x, u)`.
    pub fn jacobian_mismatch(&self, x: &Vector, u: &Vector, step: f64) -> Result<f64> {
        let base = self.value(x, u)?;
        let jac = self.jac_full(x, u)?;
        let mut worst: f64 = 0.0;
        for k in 0..self.n + self.m {
            let (mut xp, mut up) = (x.clone(), u.clone());
            if k < self.n {
                xp[k] += step;
            } else {
                up[k - self.n] += step;
            }
            let fd = (self.value(&xp, &up)? - &base) / step;
            let col = jac.column(k).clone_owned();
            let err = (&fd - &col).norm() / (1.0 + col.norm());
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

/// `ψ(x,u)` with dimension checks.
pub fn psi_eval(field: &FieldMap, x: &Vector, u: &Vector) -> Result<Vector> {
    field.value(x, u)
}
