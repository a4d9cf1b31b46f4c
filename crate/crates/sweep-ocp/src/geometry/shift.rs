use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Result, SweepError};
use crate::Vector;

/// User-supplied shift `(x, x̄, ū) ↦ u` keeping `ψ(x,u) = ψ(x̄,ū)`.
pub type ShiftFn = Arc<dyn Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync>;

/// Control shifts that keep the field value fixed while the state moves.
#[derive(Clone)]
pub enum ShiftCase {
    /// Controlled polyhedron with `s` rows: normals unchanged, offsets
    /// moved by `⟨x − x̄, ū_i⟩`.
    Polyhedral { rows: usize },
    /// `ψ(x,u) = ‖x‖² + u − 1`: `u = ū − (‖x‖² − ‖x̄‖²)`.
    QuadraticExample,
    Custom(ShiftFn),
}

impl fmt::Debug for ShiftCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftCase::Polyhedral { rows } => write!(f, "Polyhedral({rows})"),
            ShiftCase::QuadraticExample => write!(f, "QuadraticExample"),
            ShiftCase::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Shifted control for the given case.
pub fn h4_shift(case: &ShiftCase, x: &Vector, xbar: &Vector, ubar: &Vector) -> Result<Vector> {
    check_dim("shift reference state", x.len(), xbar.len())?;
    match case {
        ShiftCase::Polyhedral { rows } => {
            let n = x.len();
            let expected = rows * n + rows;
            if ubar.len() != expected {
                return Err(SweepError::Config(format!(
                    "polyhedral control needs {expected} entries (normals then offsets), got {}",
                    ubar.len()
                )));
            }
            let dx = x - xbar;
            let mut u = ubar.clone();
            for i in 0..*rows {
                let normal = ubar.rows(i * n, n);
                u[rows * n + i] += normal.dot(&dx);
            }
            Ok(u)
        }
        ShiftCase::QuadraticExample => {
            if ubar.len() != 1 {
                return Err(SweepError::Config("quadratic example has a scalar control".into()));
            }
            Ok(Vector::from_element(1, ubar[0] - (x.norm_squared() - xbar.norm_squared())))
        }
        ShiftCase::Custom(f) => Ok(f(x, xbar, ubar)),
    }
}
