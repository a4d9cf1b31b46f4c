use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result, SweepError};
use crate::geometry::{AffineInX, FieldKind, FieldMap, NonlinearSmooth, ThetaSet};
use crate::{Matrix, Vector};

/// `(t, x) ↦ f(t, x)`.
pub type DriftFn = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;
/// `(t, x) ↦ ∇ₓf(t, x)`.
pub type DriftJacFn = Arc<dyn Fn(f64, &Vector) -> Matrix + Send + Sync>;

/// Drift term `f(t, x)` with its Lipschitz constant.
#[derive(Clone)]
pub struct Drift {
    pub dim: usize,
    value: DriftFn,
    jacobian: Option<DriftJacFn>,
    pub lipschitz: f64,
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Drift(n={}, L={})", self.dim, self.lipschitz)
    }
}

impl Drift {
    pub fn new(dim: usize, value: DriftFn, jacobian: Option<DriftJacFn>, lipschitz: f64) -> Self {
        Self {
            dim,
            value,
            jacobian,
            lipschitz,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(Vector::zeros(dim))
    }

    pub fn constant(c: Vector) -> Self {
        let dim = c.len();
        Self::new(
            dim,
            Arc::new(move |_, _| c.clone()),
            Some(Arc::new(move |_, _| Matrix::zeros(dim, dim))),
            0.0,
        )
    }

    /// `f(t, x) = A x + c`.
    pub fn affine(a: Matrix, c: Vector) -> Self {
        let dim = c.len();
        let lip = crate::linalg::singular_values(&a).first().copied().unwrap_or(0.0);
        let a1 = a.clone();
        Self::new(
            dim,
            Arc::new(move |_, x| &a1 * x + &c),
            Some(Arc::new(move |_, _| a.clone())),
            lip,
        )
    }

    pub fn value(&self, t: f64, x: &Vector) -> Vector {
        (self.value)(t, x)
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// `∇ₓf`, by forward differences when no callback was given.
    pub fn jacobian(&self, t: f64, x: &Vector) -> Matrix {
        if let Some(j) = &self.jacobian {
            return j(t, x);
        }
        let base = self.value(t, x);
        let mut jac = Matrix::zeros(base.len(), x.len());
        for k in 0..x.len() {
            let step = 1e-7 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            xp[k] += step;
            jac.set_column(k, &((self.value(t, &xp) - &base) / step));
        }
        jac
    }
}

/// The state map `g`; only linear maps are supported.
#[derive(Clone, Debug)]
pub enum StateMap {
    Identity,
    Linear(Matrix),
}

impl StateMap {
    pub fn lipschitz(&self) -> f64 {
        match self {
            StateMap::Identity => 1.0,
            StateMap::Linear(g) => crate::linalg::singular_values(g).first().copied().unwrap_or(0.0),
        }
    }
}

/// Data of `x' ∈ f(t,x) − N(g(x); C(u))`, `x(0) = x0`, on `[0, T]`.
#[derive(Clone, Debug)]
pub struct SweepingSystem {
    pub drift: Drift,
    pub state_map: StateMap,
    pub field: FieldMap,
    pub theta: ThetaSet,
    pub x0: Vector,
    pub horizon: f64,
    effective: FieldMap,
}

impl SweepingSystem {
    pub fn new(
        drift: Drift,
        state_map: StateMap,
        field: FieldMap,
        theta: ThetaSet,
        x0: Vector,
        horizon: f64,
    ) -> Result<Self> {
        let n = x0.len();
        check_dim("drift dimension", n, drift.dim)?;
        check_dim("theta dimension", field.s, theta.dim())?;
        if !(drift.lipschitz >= 0.0) {
            return Err(SweepError::Config("drift Lipschitz constant must be nonnegative".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SweepError::Config(format!("horizon must be positive, got {horizon}")));
        }
        let effective = match &state_map {
            StateMap::Identity => {
                check_dim("field state dimension", n, field.n)?;
                field.clone()
            }
            StateMap::Linear(g) => {
                check_dim("state map columns", n, g.ncols())?;
                check_dim("state map rows", field.n, g.nrows())?;
                compose_linear(&field, g.clone())
            }
        };
        Ok(Self {
            drift,
            state_map,
            field,
            theta,
            x0,
            horizon,
            effective,
        })
    }

    /// Field in the state variable, `(x, u) ↦ ψ(g(x), u)`.
    pub fn effective_field(&self) -> &FieldMap {
        &self.effective
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn m(&self) -> usize {
        self.field.m
    }

    pub fn s(&self) -> usize {
        self.field.s
    }

    pub fn lipschitz_g(&self) -> f64 {
        self.state_map.lipschitz()
    }
}

fn compose_linear(field: &FieldMap, g: Matrix) -> FieldMap {
    let (n, m, s) = (g.ncols(), field.m, field.s);
    let inner_n = field.n;
    // Block map (x, u) ↦ (g x, u) for Hessian transport.
    let mut lift = Matrix::zeros(inner_n + m, n + m);
    lift.view_mut((0, 0), (inner_n, n)).copy_from(&g);
    lift.view_mut((inner_n, n), (m, m)).fill_with_identity();
    let hess_f = {
        let field = field.clone();
        let g = g.clone();
        let lift = lift.clone();
        Arc::new(move |x: &Vector, u: &Vector, p: &Vector| {
            let h = field.hessian(&(&g * x), u, p).expect("dimensions checked");
            lift.transpose() * h * &lift
        })
    };
    match &field.kind {
        FieldKind::AffineInX(a) => {
            let (a1, a2) = (a.clone(), a.clone());
            let g1 = g.clone();
            FieldMap::affine_in_x(
                n,
                m,
                s,
                AffineInX {
                    coeff: Arc::new(move |u| (a1.coeff)(u) * &g1),
                    offset: a.offset.clone(),
                    jac_u: {
                        let g = g.clone();
                        Arc::new(move |x, u| (a2.jac_u)(&(&g * x), u))
                    },
                    hessian: hess_f,
                },
            )
        }
        FieldKind::NonlinearSmooth(f) => {
            let (f1, f2, f3) = (f.clone(), f.clone(), f.clone());
            let (g1, g2, g3) = (g.clone(), g.clone(), g.clone());
            FieldMap::nonlinear(
                n,
                m,
                s,
                NonlinearSmooth {
                    value: Arc::new(move |x, u| (f1.value)(&(&g1 * x), u)),
                    jac_x: Arc::new(move |x, u| (f2.jac_x)(&(&g2 * x), u) * &g2),
                    jac_u: Arc::new(move |x, u| (f3.jac_u)(&(&g3 * x), u)),
                    hessian: hess_f,
                },
            )
        }
    }
}
