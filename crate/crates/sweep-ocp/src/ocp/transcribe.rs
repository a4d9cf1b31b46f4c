use crate::dynamics::{Mesh, NodeConvention, Path};
use crate::error::{Result, SweepError};
use crate::geometry::{ThetaSet, TOL_FEAS};
use crate::{Matrix, Vector};

use super::problem::{DiscreteDecision, OcpProblem};

/// Position of each block in the free decision vector
/// `(x_1..x_k, u_1..u_k, μ_0..μ_{k−1})`; `x_0` and `u_0` are fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Constraint rows of Θ (one multiplier each).
    pub r: usize,
}

impl Layout {
    pub fn x(&self, j: usize) -> Option<usize> {
        (j > 0).then(|| (j - 1) * self.n)
    }

    pub fn u(&self, j: usize) -> Option<usize> {
        (j > 0).then(|| self.k * self.n + (j - 1) * self.m)
    }

    pub fn mu(&self, j: usize) -> usize {
        self.k * (self.n + self.m) + j * self.r
    }

    pub fn len(&self) -> usize {
        self.k * (self.n + self.m + self.r)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of the equality system: `n` dynamics plus `r` complementarity per step.
    pub fn constraint_len(&self) -> usize {
        self.k * (self.n + self.r)
    }
}

/// Complementarity form of the explicit discrete problem
/// `x_{j+1} = x_j + h f(t_j,x_j) − h ∇ₓψ(x_j,u_j)ᵀ Rᵀμ_j`,
/// `0 ≤ μ_j ⟂ r − Rψ(x_j,u_j) ≥ 0`, endpoint `Rψ(x_k,u_k) ≤ r`.
#[derive(Clone, Debug)]
pub struct Transcription {
    pub problem: OcpProblem,
    pub mesh: Mesh,
    /// Θ written as `{z | R z ≤ r}`.
    pub rows: Matrix,
    pub rhs: Vector,
    pub layout: Layout,
    /// All node variables `(k+1)(n+m)` plus multipliers `k·r`, fixed ones included.
    pub variable_count: usize,
    pub dynamic_equalities: usize,
    pub complementarity_rows: usize,
}

/// Build the complementarity program for mesh size `k`.
pub fn transcribe(problem: &OcpProblem, k: usize) -> Result<Transcription> {
    let mesh = problem.mesh(k)?;
    let theta = &problem.system.theta;
    let (rows, rhs) = match theta {
        ThetaSet::NonpositiveOrthant { .. } | ThetaSet::Box { .. } => theta.halfspaces().ok_or_else(|| {
            SweepError::Config("box without finite bounds has no complementarity form".into())
        })?,
        _ => {
            return Err(SweepError::Config(
                "transcription supports only orthant and box constraint sets".into(),
            ))
        }
    };
    let (n, m, r) = (problem.n(), problem.m(), rows.nrows());
    let layout = Layout { k, n, m, r };
    Ok(Transcription {
        problem: problem.clone(),
        mesh,
        rows,
        rhs,
        layout,
        variable_count: (k + 1) * (n + m) + k * r,
        dynamic_equalities: k,
        complementarity_rows: k * r,
    })
}

/// Values and Jacobian of one step's equality rows.
pub(crate) struct StageConstraint {
    /// `[dynamics (n); smoothed complementarity (r)]`.
    pub value: Vector,
    /// Columns `(x_j, u_j, μ_j, x_{j+1})`.
    pub jacobian: Matrix,
    /// `r − Rψ(x_j,u_j)`.
    pub slack: Vector,
}

/// `a + b − √(a² + b² + σ²)` with its partials.
pub(crate) fn fischer_burmeister(a: f64, b: f64, sigma: f64) -> (f64, f64, f64) {
    let rho = (a * a + b * b + sigma * sigma).sqrt();
    if rho == 0.0 {
        return (0.0, 1.0 - std::f64::consts::FRAC_1_SQRT_2, 1.0 - std::f64::consts::FRAC_1_SQRT_2);
    }
    (a + b - rho, 1.0 - a / rho, 1.0 - b / rho)
}

impl Transcription {
    pub fn decision_from(&self, z: &Vector) -> Result<DiscreteDecision> {
        let l = self.layout;
        let p = &self.problem;
        let mut xs = vec![p.system.x0.clone()];
        let mut us = vec![p.initial_control.clone()];
        let mut eta = Vec::with_capacity(l.k);
        for j in 1..=l.k {
            xs.push(z.rows(l.x(j).unwrap(), l.n).clone_owned());
            us.push(z.rows(l.u(j).unwrap(), l.m).clone_owned());
        }
        for j in 0..l.k {
            eta.push(self.rows.transpose() * z.rows(l.mu(j), l.r));
        }
        Ok(DiscreteDecision {
            x: Path::new(self.mesh, xs)?,
            u: Path::new(self.mesh, us)?,
            eta,
            convention: NodeConvention::Left,
        })
    }

    /// Row multipliers `μ ≥ 0` with `Rᵀμ = η`, for the orthant and box rows.
    fn row_multipliers(&self, eta: &Vector) -> Vector {
        Vector::from_fn(self.layout.r, |i, _| {
            let row = self.rows.row(i);
            let (idx, sign) = row
                .iter()
                .enumerate()
                .find(|(_, v)| **v != 0.0)
                .map(|(c, v)| (c, v.signum()))
                .unwrap_or((0, 0.0));
            (sign * eta[idx]).max(0.0)
        })
    }

    /// Free vector of a decision; its initial node must match the fixed data.
    pub fn pack(&self, z: &DiscreteDecision) -> Result<Vector> {
        let l = self.layout;
        if z.x.mesh != self.mesh || z.u.mesh != self.mesh {
            return Err(SweepError::Config("decision mesh differs from the transcription mesh".into()));
        }
        let mut v = Vector::zeros(l.len());
        for j in 1..=l.k {
            v.rows_mut(l.x(j).unwrap(), l.n).copy_from(z.x.node(j));
            v.rows_mut(l.u(j).unwrap(), l.m).copy_from(z.u.node(j));
        }
        for j in 0..l.k {
            let eta = z.eta.get(j).cloned().unwrap_or_else(|| Vector::zeros(self.rows.ncols()));
            v.rows_mut(l.mu(j), l.r).copy_from(&self.row_multipliers(&eta));
        }
        Ok(v)
    }

    pub(crate) fn node<'a>(&self, z: &'a Vector, j: usize) -> (Vector, Vector) {
        let l = self.layout;
        let p = &self.problem;
        match (l.x(j), l.u(j)) {
            (Some(ix), Some(iu)) => (z.rows(ix, l.n).clone_owned(), z.rows(iu, l.m).clone_owned()),
            _ => (p.system.x0.clone(), p.initial_control.clone()),
        }
    }

    pub(crate) fn stage_constraint(&self, z: &Vector, j: usize, sigma: f64) -> Result<StageConstraint> {
        let l = self.layout;
        let (n, m, r) = (l.n, l.m, l.r);
        let field = self.problem.system.effective_field();
        let h = self.mesh.h();
        let t = self.mesh.t(j);
        let (xj, uj) = self.node(z, j);
        let (xn, _) = self.node(z, j + 1);
        let mu = z.rows(l.mu(j), r).clone_owned();
        let eta = self.rows.transpose() * &mu;
        let psi = field.value(&xj, &uj)?;
        let jx = field.jac_x(&xj, &uj)?;
        let ju = field.jac_u(&xj, &uj)?;
        let hess = field.hessian(&xj, &uj, &eta)?;
        let drift = &self.problem.system.drift;
        let dyn_res = &xn - &xj - drift.value(t, &xj) * h + jx.transpose() * &eta * h;
        let slack = &self.rhs - &self.rows * &psi;
        let mut value = Vector::zeros(n + r);
        value.rows_mut(0, n).copy_from(&dyn_res);
        let mut jac = Matrix::zeros(n + r, 2 * n + m + r);
        // dynamics rows
        let dx = -Matrix::identity(n, n) - drift.jacobian(t, &xj) * h + hess.view((0, 0), (n, n)) * h;
        jac.view_mut((0, 0), (n, n)).copy_from(&dx);
        jac.view_mut((0, n), (n, m)).copy_from(&(hess.view((0, n), (n, m)) * h));
        jac.view_mut((0, n + m), (n, r)).copy_from(&(jx.transpose() * self.rows.transpose() * h));
        jac.view_mut((0, n + m + r), (n, n)).fill_with_identity();
        // complementarity rows
        let rjx = &self.rows * &jx;
        let rju = &self.rows * &ju;
        for i in 0..r {
            let (fb, da, db) = fischer_burmeister(mu[i], slack[i], sigma);
            value[n + i] = fb;
            for c in 0..n {
                jac[(n + i, c)] = -db * rjx[(i, c)];
            }
            for c in 0..m {
                jac[(n + i, n + c)] = -db * rju[(i, c)];
            }
            jac[(n + i, n + m + i)] = da;
        }
        Ok(StageConstraint {
            value,
            jacobian: jac,
            slack,
        })
    }

    /// `max_j ‖x_{j+1} − x_j − h f + h ∇ₓψᵀη_j‖_∞`.
    pub fn dynamics_residual(&self, z: &Vector) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for j in 0..self.layout.k {
            let c = self.stage_constraint(z, j, 0.0)?;
            worst = worst.max(crate::linalg::inf_norm(&c.value.rows(0, self.layout.n).clone_owned()));
        }
        Ok(worst)
    }

    /// `max |min(μ, r − Rψ)|` over all steps and rows.
    pub fn complementarity_residual(&self, z: &Vector) -> Result<f64> {
        let l = self.layout;
        let mut worst: f64 = 0.0;
        for j in 0..l.k {
            let c = self.stage_constraint(z, j, 0.0)?;
            for i in 0..l.r {
                worst = worst.max(z[l.mu(j) + i].min(c.slack[i]).abs());
            }
        }
        Ok(worst)
    }

    /// `max_i (Rψ(x_k,u_k) − r)_i⁺`.
    pub fn endpoint_violation(&self, z: &Vector) -> Result<f64> {
        let (xk, uk) = self.node(z, self.layout.k);
        let psi = self.problem.system.effective_field().value(&xk, &uk)?;
        let g = &self.rows * psi - &self.rhs;
        Ok(g.iter().fold(0.0f64, |a, &b| a.max(b)))
    }

    /// Largest row violation of `ψ(x_j,u_j) ∈ Θ` over all nodes.
    pub fn node_violation(&self, z: &Vector) -> Result<f64> {
        let field = self.problem.system.effective_field();
        let mut worst: f64 = 0.0;
        for j in 0..=self.layout.k {
            let (x, u) = self.node(z, j);
            let g = &self.rows * field.value(&x, &u)? - &self.rhs;
            worst = g.iter().fold(worst, |a, &b| a.max(b));
        }
        Ok(worst)
    }

    pub(crate) fn initial_feasible(&self) -> Result<bool> {
        let field = self.problem.system.effective_field();
        let z0 = field.value(&self.problem.system.x0, &self.problem.initial_control)?;
        Ok(self.problem.system.theta.contains(&z0, TOL_FEAS))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Drift, StateMap, SweepingSystem};
    use crate::geometry::FieldMap;
    use crate::ocp::cost::{MinimizerMode, RunningCost, TerminalCost};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn problem(field: FieldMap, theta: ThetaSet, x0: Vector, u0: Vector) -> OcpProblem {
        let sys = SweepingSystem::new(Drift::zero(x0.len()), StateMap::Identity, field, theta, x0, 1.0).unwrap();
        OcpProblem::new(sys, u0, TerminalCost::Zero, RunningCost::Terms(vec![]), MinimizerMode::W12xW12).unwrap()
    }

    fn halfline() -> OcpProblem {
        problem(
            FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0])),
            ThetaSet::orthant(1),
            v(&[1.5]),
            v(&[-2.0]),
        )
    }

    #[test]
    fn counts_for_scalar_halfline() {
        let t = transcribe(&halfline(), 2).unwrap();
        assert_eq!((t.variable_count, t.dynamic_equalities, t.complementarity_rows), (8, 2, 2));
        let t1 = transcribe(&halfline(), 1).unwrap();
        assert_eq!(t1.dynamic_equalities, 1);
    }

    #[test]
    fn counts_for_two_fixed_rows() {
        let p = problem(
            FieldMap::polyhedral_fixed_rows(Matrix::identity(2, 2)),
            ThetaSet::orthant(2),
            v(&[1.0, 1.0]),
            v(&[1.0, 1.0]),
        );
        assert_eq!(transcribe(&p, 4).unwrap().complementarity_rows, 8);
    }

    #[test]
    fn unsupported_theta_is_config_error() {
        use crate::geometry::SmoothInequality;
        let p = problem(
            FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0])),
            ThetaSet::SmoothInequality(SmoothInequality::affine(Matrix::from_element(1, 1, 1.0), v(&[0.0]))),
            v(&[-1.0]),
            v(&[0.0]),
        );
        assert!(matches!(transcribe(&p, 3), Err(SweepError::Config(_))));
    }

    #[test]
    fn stage_jacobian_matches_differences() {
        let p = problem(
            FieldMap::polyhedral(2, 2),
            ThetaSet::boxed(v(&[-1.0, f64::NEG_INFINITY]), v(&[0.0, 0.5])).unwrap(),
            v(&[0.1, 0.2]),
            v(&[1.0, 0.2, -0.3, 1.0, 0.9, 0.4]),
        );
        let t = transcribe(&p, 3).unwrap();
        let l = t.layout;
        let z = Vector::from_fn(l.len(), |i, _| ((i * 7 % 11) as f64) * 0.1 - 0.4);
        let c = t.stage_constraint(&z, 1, 0.3).unwrap();
        let cols: Vec<usize> = (0..l.n)
            .map(|i| l.x(1).unwrap() + i)
            .chain((0..l.m).map(|i| l.u(1).unwrap() + i))
            .chain((0..l.r).map(|i| l.mu(1) + i))
            .chain((0..l.n).map(|i| l.x(2).unwrap() + i))
            .collect();
        for (col, &g) in cols.iter().enumerate() {
            let e = 1e-6;
            let mut zp = z.clone();
            zp[g] += e;
            let mut zm = z.clone();
            zm[g] -= e;
            let fd = (t.stage_constraint(&zp, 1, 0.3).unwrap().value - t.stage_constraint(&zm, 1, 0.3).unwrap().value)
                / (2.0 * e);
            let err = (fd - c.jacobian.column(col)).norm();
            assert!(err < 1e-7, "column {col}: {err}");
        }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let t = transcribe(&halfline(), 3).unwrap();
        let z = Vector::from_vec(vec![1.4, 1.3, 1.2, -1.4, -1.3, -1.2, 0.0, 5.0, 5.0]);
        let d = t.decision_from(&z).unwrap();
        assert_eq!(d.x.node(0)[0], 1.5);
        assert_eq!(t.pack(&d).unwrap(), z);
    }
}
