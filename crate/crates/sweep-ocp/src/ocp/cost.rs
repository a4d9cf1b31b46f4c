use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SweepError};
use crate::Vector;

/// Piecewise-linear reference `r(t)` through `(t, value)` breakpoints,
/// held constant outside the breakpoint range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints(pub Vec<(f64, Vec<f64>)>);

impl Breakpoints {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(SweepError::Config("reference needs at least one breakpoint".into()));
        }
        if self.0.iter().any(|(_, v)| v.len() != dim) {
            return Err(SweepError::Config(format!("reference values must have length {dim}")));
        }
        if self.0.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(SweepError::Config("reference times must increase".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Vector {
        let pts = &self.0;
        if t <= pts[0].0 {
            return Vector::from_column_slice(&pts[0].1);
        }
        for w in pts.windows(2) {
            let ((t0, v0), (t1, v1)) = (&w[0], &w[1]);
            if t <= *t1 {
                let a = (t - t0) / (t1 - t0);
                return Vector::from_fn(v0.len(), |i, _| v0[i] * (1.0 - a) + v1[i] * a);
            }
        }
        Vector::from_column_slice(&pts[pts.len() - 1].1)
    }
}

/// One builtin term of the running cost `ℓ(t, x, u, ẋ, u̇)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunningTerm {
    /// `weight·‖u − r(t)‖²`.
    ControlTracking { weight: f64, reference: Breakpoints },
    /// `weight·‖x − r(t)‖²`.
    StateTracking { weight: f64, reference: Breakpoints },
    /// `½·weight·‖u̇‖²`.
    ControlRateEnergy { weight: f64 },
    /// `½·weight·‖ẋ‖²`.
    StateRateEnergy { weight: f64 },
    /// `½·weight·‖u‖²`.
    ControlEnergy { weight: f64 },
    /// `½·weight·‖x‖²`.
    StateEnergy { weight: f64 },
    Constant { value: f64 },
}

impl RunningTerm {
    fn uses_control_rate(&self) -> bool {
        matches!(self, RunningTerm::ControlRateEnergy { .. })
    }

    fn eval(&self, t: f64, a: &RunningArgs<'_>, g: &mut RunningGrad) -> f64 {
        match self {
            RunningTerm::ControlTracking { weight, reference } => {
                let d = a.u - reference.eval(t);
                g.wu += &d * (2.0 * weight);
                weight * d.norm_squared()
            }
            RunningTerm::StateTracking { weight, reference } => {
                let d = a.x - reference.eval(t);
                g.wx += &d * (2.0 * weight);
                weight * d.norm_squared()
            }
            RunningTerm::ControlRateEnergy { weight } => {
                g.vu += a.udot * *weight;
                0.5 * weight * a.udot.norm_squared()
            }
            RunningTerm::StateRateEnergy { weight } => {
                g.vx += a.xdot * *weight;
                0.5 * weight * a.xdot.norm_squared()
            }
            RunningTerm::ControlEnergy { weight } => {
                g.wu += a.u * *weight;
                0.5 * weight * a.u.norm_squared()
            }
            RunningTerm::StateEnergy { weight } => {
                g.wx += a.x * *weight;
                0.5 * weight * a.x.norm_squared()
            }
            RunningTerm::Constant { value } => *value,
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        match self {
            RunningTerm::ControlTracking { reference, .. } => reference.validate(m),
            RunningTerm::StateTracking { reference, .. } => reference.validate(n),
            _ => Ok(()),
        }
    }
}

/// Arguments of `ℓ`.
pub struct RunningArgs<'a> {
    pub x: &'a Vector,
    pub u: &'a Vector,
    pub xdot: &'a Vector,
    pub udot: &'a Vector,
}

/// Gradient selection `(w^x, w^u, v^x, v^u)` of `ℓ` in `(x, u, ẋ, u̇)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningGrad {
    pub wx: Vector,
    pub wu: Vector,
    pub vx: Vector,
    pub vu: Vector,
}

impl RunningGrad {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            wx: Vector::zeros(n),
            wu: Vector::zeros(m),
            vx: Vector::zeros(n),
            vu: Vector::zeros(m),
        }
    }
}

/// `(t, x, u, ẋ, u̇) ↦ (ℓ, gradient selection)`.
pub type RunningFn = Arc<dyn Fn(f64, &RunningArgs<'_>) -> (f64, RunningGrad) + Send + Sync>;

/// Running cost: a sum of builtin terms or a user callback.
#[derive(Clone)]
pub enum RunningCost {
    Terms(Vec<RunningTerm>),
    Custom(RunningFn),
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunningCost::Terms(t) => f.debug_tuple("Terms").field(t).finish(),
            RunningCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl RunningCost {
    pub fn eval(&self, n: usize, m: usize, t: f64, args: &RunningArgs<'_>) -> (f64, RunningGrad) {
        match self {
            RunningCost::Terms(terms) => {
                let mut g = RunningGrad::zeros(n, m);
                let v = terms.iter().map(|term| term.eval(t, args, &mut g)).sum();
                (v, g)
            }
            RunningCost::Custom(f) => f(t, args),
        }
    }

    /// Whether `ℓ` may depend on `u̇`; unknown for callbacks.
    pub fn uses_control_rate(&self) -> bool {
        match self {
            RunningCost::Terms(terms) => terms.iter().any(RunningTerm::uses_control_rate),
            RunningCost::Custom(_) => true,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if let RunningCost::Terms(terms) = self {
            for t in terms {
                t.validate(n, m)?;
            }
        }
        Ok(())
    }
}

/// `x ↦ (φ(x), ∇φ(x))`.
pub type TerminalFn = Arc<dyn Fn(&Vector) -> (f64, Vector) + Send + Sync>;

/// Terminal cost `φ`.
#[derive(Clone)]
pub enum TerminalCost {
    Zero,
    /// `½·weight·‖x − target‖²`.
    Quadratic { weight: f64, target: Vector },
    Custom(TerminalFn),
}

impl fmt::Debug for TerminalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalCost::Zero => f.write_str("Zero"),
            TerminalCost::Quadratic { weight, target } => f
                .debug_struct("Quadratic")
                .field("weight", weight)
                .field("target", &target.as_slice())
                .finish(),
            TerminalCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl TerminalCost {
    pub fn eval(&self, x: &Vector) -> (f64, Vector) {
        match self {
            TerminalCost::Zero => (0.0, Vector::zeros(x.len())),
            TerminalCost::Quadratic { weight, target } => {
                let d = x - target;
                (0.5 * weight * d.norm_squared(), d * *weight)
            }
            TerminalCost::Custom(f) => f(x),
        }
    }
}

/// Which local-minimizer class the discrete problem approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MinimizerMode {
    /// Controls measured in `W^{1,2}`; `ℓ` may use `u̇`.
    #[default]
    #[serde(rename = "w12w12")]
    W12xW12,
    /// Controls measured uniformly; `ℓ` ignores `u̇`.
    #[serde(rename = "w12c")]
    W12xC,
}

impl std::str::FromStr for MinimizerMode {
    type Err = SweepError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w12w12" => Ok(Self::W12xW12),
            "w12c" => Ok(Self::W12xC),
            other => Err(SweepError::Config(format!("unknown mode '{other}' (expected w12w12 or w12c)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn breakpoint_reference() {
        let r = Breakpoints(vec![(0.0, vec![-2.0]), (1.0, vec![-1.0]), (2.0, vec![-1.0])]);
        assert!((r.eval(0.25)[0] + 1.75).abs() < 1e-15);
        assert_eq!(r.eval(1.5)[0], -1.0);
        assert_eq!(r.eval(3.0)[0], -1.0);
        assert!(Breakpoints(vec![(1.0, vec![0.0]), (0.0, vec![0.0])]).validate(1).is_err());
    }

    #[test]
    fn term_gradients_match_differences() {
        let cost = RunningCost::Terms(vec![
            RunningTerm::ControlTracking {
                weight: 1.5,
                reference: Breakpoints(vec![(0.0, vec![1.0, 0.0]), (1.0, vec![0.0, 2.0])]),
            },
            RunningTerm::ControlRateEnergy { weight: 0.7 },
            RunningTerm::StateRateEnergy { weight: 2.0 },
            RunningTerm::StateEnergy { weight: 0.3 },
        ]);
        let (x, u, xd, ud) = (v(&[0.2, -0.4]), v(&[0.9, 1.1]), v(&[1.0, 0.5]), v(&[-0.3, 0.8]));
        let f = |x: &Vector, u: &Vector, xd: &Vector, ud: &Vector| {
            cost.eval(2, 2, 0.3, &RunningArgs { x, u, xdot: xd, udot: ud }).0
        };
        let (_, g) = cost.eval(2, 2, 0.3, &RunningArgs { x: &x, u: &u, xdot: &xd, udot: &ud });
        let e = 1e-6;
        for i in 0..2 {
            let mut p = x.clone();
            p[i] += e;
            assert!(((f(&p, &u, &xd, &ud) - f(&x, &u, &xd, &ud)) / e - g.wx[i]).abs() < 1e-4);
            let mut p = u.clone();
            p[i] += e;
            assert!(((f(&x, &p, &xd, &ud) - f(&x, &u, &xd, &ud)) / e - g.wu[i]).abs() < 1e-4);
            let mut p = xd.clone();
            p[i] += e;
            assert!(((f(&x, &u, &p, &ud) - f(&x, &u, &xd, &ud)) / e - g.vx[i]).abs() < 1e-4);
            let mut p = ud.clone();
            p[i] += e;
            assert!(((f(&x, &u, &xd, &p) - f(&x, &u, &xd, &ud)) / e - g.vu[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("w12c".parse::<MinimizerMode>().unwrap(), MinimizerMode::W12xC);
        assert!("bogus".parse::<MinimizerMode>().is_err());
    }
}
