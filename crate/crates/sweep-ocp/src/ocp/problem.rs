use serde::{Deserialize, Serialize};

use crate::dynamics::{Mesh, NodeConvention, Path, SweepingSystem};
use crate::error::{check_dim, Result, SweepError};
use crate::Vector;

use super::cost::{MinimizerMode, RunningArgs, RunningCost, TerminalCost};

/// Reference pair the proximity terms are measured against.
#[derive(Clone, Debug)]
pub struct Anchor {
    pub state: Path,
    pub control: Path,
    pub weight: f64,
}

/// Discrete Bolza problem over a sweeping system.
#[derive(Clone, Debug)]
pub struct OcpProblem {
    pub system: SweepingSystem,
    /// Prescribed `u_0`.
    pub initial_control: Vector,
    pub terminal: TerminalCost,
    pub running: RunningCost,
    pub mode: MinimizerMode,
    pub anchor: Option<Anchor>,
    /// Localization radius; `∞` disables the tube.
    pub epsilon: f64,
}

impl OcpProblem {
    pub fn new(
        system: SweepingSystem,
        initial_control: Vector,
        terminal: TerminalCost,
        running: RunningCost,
        mode: MinimizerMode,
    ) -> Result<Self> {
        let p = Self {
            system,
            initial_control,
            terminal,
            running,
            mode,
            anchor: None,
            epsilon: f64::INFINITY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_anchor(mut self, anchor: Anchor, epsilon: f64) -> Result<Self> {
        self.anchor = Some(anchor);
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.system.n(), self.system.m());
        check_dim("initial control", m, self.initial_control.len())?;
        self.running.validate(n, m)?;
        if self.mode == MinimizerMode::W12xC && self.running.uses_control_rate() {
            if let RunningCost::Terms(_) = self.running {
                return Err(SweepError::Config("w12c mode requires a running cost without u̇ terms".into()));
            }
        }
        if let Some(a) = &self.anchor {
            check_dim("anchor state", n, a.state.dim())?;
            check_dim("anchor control", m, a.control.dim())?;
            if !(a.weight >= 0.0) {
                return Err(SweepError::Config("anchor weight must be nonnegative".into()));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(SweepError::Config("localization radius must be positive".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    pub fn mesh(&self, k: usize) -> Result<Mesh> {
        Mesh::new(k, self.system.horizon)
    }
}

/// `z = (x_0..x_k, u_0..u_k)` with the step multipliers `η_0..η_{k−1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteDecision {
    pub x: Path,
    pub u: Path,
    pub eta: Vec<Vector>,
    /// Node at which each `η_j` lives.
    pub convention: NodeConvention,
}

impl DiscreteDecision {
    pub fn k(&self) -> usize {
        self.x.k()
    }

    pub fn h(&self) -> f64 {
        self.x.h()
    }

    pub fn eta_path(&self) -> Result<Path> {
        let mut vals = self.eta.clone();
        vals.push(vals.last().cloned().unwrap_or_else(|| Vector::zeros(0)));
        Path::new(self.x.mesh, vals)
    }
}

/// `∫_{t0}^{t1} ‖c − ȧ(t)‖² dt` and `∫_{t0}^{t1} (c − ȧ(t)) dt` for a
/// piecewise-linear `a`.
pub fn slope_mismatch(anchor: &Path, t0: f64, t1: f64, c: &Vector) -> (f64, Vector) {
    let mesh = anchor.mesh;
    let mut cuts = vec![t0];
    let first = mesh.interval_of(t0) + 1;
    for i in first..mesh.k {
        let t = mesh.t(i);
        if t >= t1 {
            break;
        }
        if t > t0 {
            cuts.push(t);
        }
    }
    cuts.push(t1);
    let mut sq = 0.0;
    let mut lin = Vector::zeros(c.len());
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let d = c - anchor.slope(mesh.interval_of(0.5 * (w[0] + w[1])));
        sq += len * d.norm_squared();
        lin += d * len;
    }
    (sq, lin)
}

/// Stage cost of interval `j` and its gradient in `(x_j, u_j, x_{j+1}, u_{j+1})`.
pub(crate) fn stage_cost(
    p: &OcpProblem,
    mesh: &Mesh,
    j: usize,
    xj: &Vector,
    uj: &Vector,
    xn: &Vector,
    un: &Vector,
) -> (f64, Vector) {
    let (n, m) = (p.n(), p.m());
    let h = mesh.h();
    let t = mesh.t(j);
    let xdot = (xn - xj) / h;
    let udot = match p.mode {
        MinimizerMode::W12xW12 => (un - uj) / h,
        MinimizerMode::W12xC => Vector::zeros(m),
    };
    let (l, g) = p.running.eval(
        n,
        m,
        t,
        &RunningArgs {
            x: xj,
            u: uj,
            xdot: &xdot,
            udot: &udot,
        },
    );
    let mut value = h * l;
    let mut gx0 = &g.wx * h - &g.vx;
    let mut gx1 = g.vx.clone();
    let (mut gu0, mut gu1) = match p.mode {
        MinimizerMode::W12xW12 => (&g.wu * h - &g.vu, g.vu.clone()),
        MinimizerMode::W12xC => (&g.wu * h, Vector::zeros(m)),
    };
    if let Some(a) = &p.anchor {
        let rho = a.weight;
        let (t0, t1) = (t, mesh.t(j + 1));
        let (sqx, linx) = slope_mismatch(&a.state, t0, t1, &xdot);
        match p.mode {
            MinimizerMode::W12xW12 => {
                let (squ, linu) = slope_mismatch(&a.control, t0, t1, &((un - uj) / h));
                value += rho * h * (sqx + squ);
                gx1 += &linx * (2.0 * rho);
                gx0 -= &linx * (2.0 * rho);
                gu1 += &linu * (2.0 * rho);
                gu0 -= &linu * (2.0 * rho);
            }
            MinimizerMode::W12xC => {
                let du = uj - a.control.eval(t0);
                value += rho * (sqx + du.norm_squared());
                gx1 += &linx * (2.0 * rho / h);
                gx0 -= &linx * (2.0 * rho / h);
                gu0 += du * (2.0 * rho);
            }
        }
    }
    let mut grad = Vector::zeros(2 * n + 2 * m);
    grad.rows_mut(0, n).copy_from(&gx0);
    grad.rows_mut(n, m).copy_from(&gu0);
    grad.rows_mut(n + m, n).copy_from(&gx1);
    grad.rows_mut(2 * n + m, m).copy_from(&gu1);
    (value, grad)
}

/// Terminal part `φ(x_k)` (plus the last control proximity node in w12c
/// mode) and its gradient in `(x_k, u_k)`.
pub(crate) fn terminal_cost(p: &OcpProblem, mesh: &Mesh, xk: &Vector, uk: &Vector) -> (f64, Vector) {
    let (n, m) = (p.n(), p.m());
    let (mut value, gx) = p.terminal.eval(xk);
    let mut grad = Vector::zeros(n + m);
    grad.rows_mut(0, n).copy_from(&gx);
    if let (Some(a), MinimizerMode::W12xC) = (&p.anchor, p.mode) {
        let du = uk - a.control.eval(mesh.horizon);
        value += a.weight * du.norm_squared();
        grad.rows_mut(n, m).copy_from(&(du * (2.0 * a.weight)));
    }
    (value, grad)
}

/// Discrete cost `J_k` of a decision.
pub fn cost_eval(problem: &OcpProblem, z: &DiscreteDecision) -> Result<f64> {
    let (n, m) = (problem.n(), problem.m());
    check_dim("decision states", n, z.x.dim())?;
    check_dim("decision controls", m, z.u.dim())?;
    if z.x.mesh != z.u.mesh {
        return Err(SweepError::Config("decision paths must share a mesh".into()));
    }
    let mesh = z.x.mesh;
    let mut total = 0.0;
    for j in 0..mesh.k {
        total += stage_cost(problem, &mesh, j, z.x.node(j), z.u.node(j), z.x.node(j + 1), z.u.node(j + 1)).0;
    }
    total += terminal_cost(problem, &mesh, z.x.node(mesh.k), z.u.node(mesh.k)).0;
    Ok(total)
}

/// Proximity quantities `(θ^x_j, θ^u_j)` entering the discrete adjoint relations.
pub fn anchor_theta(problem: &OcpProblem, z: &DiscreteDecision, j: usize) -> (Vector, Vector) {
    let (n, m) = (problem.n(), problem.m());
    let Some(a) = &problem.anchor else {
        return (Vector::zeros(n), Vector::zeros(m));
    };
    let mesh = z.x.mesh;
    let (t0, t1) = (mesh.t(j), mesh.t(j + 1));
    let (_, lx) = slope_mismatch(&a.state, t0, t1, &z.x.slope(j));
    let tu = match problem.mode {
        MinimizerMode::W12xW12 => slope_mismatch(&a.control, t0, t1, &z.u.slope(j)).1 * 2.0,
        MinimizerMode::W12xC => (z.u.node(j) - a.control.eval(t0)) * 2.0,
    };
    (lx * 2.0, tu)
}

/// Largest violation of the localization constraints; `0` without an anchor
/// or with an infinite radius.
pub fn localization_violation(problem: &OcpProblem, z: &DiscreteDecision) -> f64 {
    let Some(a) = &problem.anchor else {
        return 0.0;
    };
    if !problem.epsilon.is_finite() {
        return 0.0;
    }
    let eps = problem.epsilon;
    let mesh = z.x.mesh;
    let mut worst: f64 = 0.0;
    let mut integral = 0.0;
    for j in 0..=mesh.k {
        let t = mesh.t(j);
        let d = ((z.x.node(j) - a.state.eval(t)).norm_squared() + (z.u.node(j) - a.control.eval(t)).norm_squared())
            .sqrt();
        worst = worst.max(d - eps / 2.0);
        if j < mesh.k {
            integral += slope_mismatch(&a.state, t, mesh.t(j + 1), &z.x.slope(j)).0;
            if problem.mode == MinimizerMode::W12xW12 {
                integral += slope_mismatch(&a.control, t, mesh.t(j + 1), &z.u.slope(j)).0;
            }
        }
    }
    worst.max(integral - eps / 2.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Drift, StateMap};
    use crate::geometry::{FieldMap, ThetaSet};
    use crate::ocp::cost::RunningTerm;
    use crate::Matrix;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn halfline_problem(running: Vec<RunningTerm>, terminal: TerminalCost) -> OcpProblem {
        let sys = SweepingSystem::new(
            Drift::zero(1),
            StateMap::Identity,
            FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0])),
            ThetaSet::orthant(1),
            v(&[1.5]),
            2.0,
        )
        .unwrap();
        OcpProblem::new(sys, v(&[-2.0]), terminal, RunningCost::Terms(running), MinimizerMode::W12xW12).unwrap()
    }

    fn decision(k: usize, x: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64) -> DiscreteDecision {
        let mesh = Mesh::new(k, 2.0).unwrap();
        DiscreteDecision {
            x: Path::from_fn(mesh, |t| v(&[x(t)])),
            u: Path::from_fn(mesh, |t| v(&[u(t)])),
            eta: vec![v(&[0.0]); k],
            convention: NodeConvention::Left,
        }
    }

    #[test]
    fn unit_running_cost_integrates_to_horizon() {
        let p = halfline_problem(vec![RunningTerm::Constant { value: 1.0 }], TerminalCost::Zero);
        let z = decision(7, |_| 1.5, |_| -2.0);
        assert!((cost_eval(&p, &z).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn anchor_at_itself_adds_nothing() {
        let p = halfline_problem(vec![RunningTerm::StateEnergy { weight: 1.0 }], TerminalCost::Zero);
        let z = decision(10, |t| 1.5 - 0.1 * t, |t| t - 2.0);
        let base = cost_eval(&p, &z).unwrap();
        for mode in [MinimizerMode::W12xW12, MinimizerMode::W12xC] {
            let mut q = p.clone();
            q.mode = mode;
            let q = q
                .with_anchor(
                    Anchor {
                        state: z.x.clone(),
                        control: z.u.clone(),
                        weight: 3.0,
                    },
                    f64::INFINITY,
                )
                .unwrap();
            assert!((cost_eval(&q, &z).unwrap() - base).abs() < 1e-12);
            assert_eq!(localization_violation(&q, &z), 0.0);
        }
    }

    #[test]
    fn slope_mismatch_splits_at_anchor_kinks() {
        let a = Path::from_fn(Mesh::new(2, 2.0).unwrap(), |t| v(&[(t - 1.0).abs()]));
        // Slope −1 on [0,1], +1 on [1,2]; c = 0 over [0.5, 1.5].
        let (sq, lin) = slope_mismatch(&a, 0.5, 1.5, &v(&[0.0]));
        assert!((sq - 1.0).abs() < 1e-14);
        assert!(lin[0].abs() < 1e-14);
    }

    #[test]
    fn stage_gradient_matches_differences() {
        let mut p = halfline_problem(
            vec![
                RunningTerm::ControlRateEnergy { weight: 1.0 },
                RunningTerm::StateEnergy { weight: 0.5 },
            ],
            TerminalCost::Zero,
        );
        let mesh = Mesh::new(4, 2.0).unwrap();
        let anchor = Anchor {
            state: Path::from_fn(Mesh::new(3, 2.0).unwrap(), |t| v(&[t * t])),
            control: Path::from_fn(Mesh::new(5, 2.0).unwrap(), |t| v(&[-t])),
            weight: 0.7,
        };
        p = p.with_anchor(anchor, f64::INFINITY).unwrap();
        for mode in [MinimizerMode::W12xW12, MinimizerMode::W12xC] {
            let mut q = p.clone();
            q.mode = mode;
            if mode == MinimizerMode::W12xC {
                q.running = RunningCost::Terms(vec![RunningTerm::StateEnergy { weight: 0.5 }]);
            }
            let w = v(&[0.3, -0.2, 0.7, 0.1]);
            let f = |w: &Vector| stage_cost(&q, &mesh, 1, &v(&[w[0]]), &v(&[w[1]]), &v(&[w[2]]), &v(&[w[3]])).0;
            let (_, g) = stage_cost(&q, &mesh, 1, &v(&[w[0]]), &v(&[w[1]]), &v(&[w[2]]), &v(&[w[3]]));
            for i in 0..4 {
                let e = 1e-6;
                let mut wp = w.clone();
                wp[i] += e;
                let mut wm = w.clone();
                wm[i] -= e;
                let fd = (f(&wp) - f(&wm)) / (2.0 * e);
                assert!((fd - g[i]).abs() < 1e-6, "{mode:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn w12c_rejects_rate_terms() {
        let p = halfline_problem(vec![RunningTerm::ControlRateEnergy { weight: 1.0 }], TerminalCost::Zero);
        let mut q = p.clone();
        q.mode = MinimizerMode::W12xC;
        assert!(q.validate().is_err());
    }
}
