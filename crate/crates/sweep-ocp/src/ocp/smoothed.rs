use crate::error::{Result, SweepError};
use crate::linalg::{inf_norm, lstsq};
use crate::{Matrix, Vector};

use super::cost::MinimizerMode;
use super::problem::{cost_eval, localization_violation, slope_mismatch, stage_cost, terminal_cost, DiscreteDecision};
use super::report::{Solution, SolveReport, SolverKind, StageRecord};
use super::transcribe::{fischer_burmeister, Transcription};

/// Tolerances for the warm start and the returned solution.
const WARM_START_TOL: f64 = 1e-8;
const DYNAMICS_TOL: f64 = 1e-6;
const COMPLEMENTARITY_TOL: f64 = 1e-6;
const ENDPOINT_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const MAX_DAMPING_TRIES: usize = 40;
const MAX_AL_ROUNDS: usize = 12;

pub fn default_sigma_schedule() -> Vec<f64> {
    (1..=8).map(|e| 10f64.powi(-e)).collect()
}

#[derive(Clone, Debug)]
pub struct SmoothedOptions {
    /// Strictly decreasing; the last entry must be at most `1e-8`.
    pub sigma_schedule: Vec<f64>,
    /// Stationarity and equality tolerance for every stage.
    pub tol: f64,
    /// Newton steps allowed per stage (and per augmented-Lagrangian round).
    pub max_iter: usize,
}

impl Default for SmoothedOptions {
    fn default() -> Self {
        Self {
            sigma_schedule: default_sigma_schedule(),
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl SmoothedOptions {
    fn validate(&self) -> Result<()> {
        let s = &self.sigma_schedule;
        if s.is_empty() || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SweepError::Config("sigma schedule needs positive finite entries".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SweepError::Config("sigma schedule must be strictly decreasing".into()));
        }
        if *s.last().unwrap() > 1e-8 {
            return Err(SweepError::Config("sigma schedule must end at or below 1e-8".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(SweepError::Config("tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Inequality `g(z) ≤ 0` handled by the augmented Lagrangian, in sparse form.
struct IneqRow {
    value: f64,
    grad: Vec<(usize, f64)>,
    hess: Vec<(usize, usize, f64)>,
}

struct Augmented {
    mult: Vec<f64>,
    penalty: f64,
}

impl Augmented {
    /// `(max(0, y + ρg)² − y²) / 2ρ` and its weight `max(0, y + ρg)`.
    fn term(&self, i: usize, g: f64) -> (f64, f64) {
        let y = self.mult.get(i).copied().unwrap_or(0.0);
        let w = (y + self.penalty * g).max(0.0);
        ((w * w - y * y) / (2.0 * self.penalty), w)
    }
}

/// Objective value, gradient and Hessian over the free vector.
struct Objective {
    value: f64,
    grad: Vector,
    hess: Matrix,
}

struct Solver<'a> {
    tr: &'a Transcription,
    al: Augmented,
}

fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Add a local symmetric block into the global matrix; `None` marks a fixed entry.
fn scatter(global: &mut Matrix, local: &Matrix, map: &[Option<usize>]) {
    for (a, ga) in map.iter().enumerate() {
        let Some(ga) = ga else { continue };
        for (b, gb) in map.iter().enumerate() {
            if let Some(gb) = gb {
                global[(*ga, *gb)] += local[(a, b)];
            }
        }
    }
}

/// Central-difference Jacobian of a gradient map, symmetrized.
fn fd_hessian(w: &Vector, grad: impl Fn(&Vector) -> Result<Vector>) -> Result<Matrix> {
    let d = w.len();
    let mut h = Matrix::zeros(d, d);
    for i in 0..d {
        let e = fd_step(w[i]);
        let mut wp = w.clone();
        wp[i] += e;
        let mut wm = w.clone();
        wm[i] -= e;
        h.set_column(i, &((grad(&wp)? - grad(&wm)?) / (2.0 * e)));
    }
    Ok((&h + h.transpose()) * 0.5)
}

impl<'a> Solver<'a> {
    fn range(&self, start: Option<usize>, len: usize) -> Vec<Option<usize>> {
        (0..len).map(|i| start.map(|s| s + i)).collect()
    }

    fn node_map(&self, j: usize) -> Vec<Option<usize>> {
        let l = self.tr.layout;
        let mut map = self.range(l.x(j), l.n);
        map.extend(self.range(l.u(j), l.m));
        map
    }

    fn inequality_rows(&self, z: &Vector) -> Result<Vec<IneqRow>> {
        let tr = self.tr;
        let l = tr.layout;
        let p = &tr.problem;
        let field = p.system.effective_field();
        let mut rows = Vec::new();
        let (xk, uk) = tr.node(z, l.k);
        let psi = field.value(&xk, &uk)?;
        let jac = field.jac_full(&xk, &uk)?;
        let map = self.node_map(l.k);
        for i in 0..l.r {
            let ri = tr.rows.row(i).transpose();
            let g = (ri.transpose() * &jac).transpose();
            let hess = field.hessian(&xk, &uk, &ri)?;
            let mut row = IneqRow {
                value: ri.dot(&psi) - tr.rhs[i],
                grad: Vec::new(),
                hess: Vec::new(),
            };
            for (a, ga) in map.iter().enumerate() {
                let ga = ga.expect("final node is free");
                row.grad.push((ga, g[a]));
                for (b, gb) in map.iter().enumerate() {
                    row.hess.push((ga, gb.unwrap(), hess[(a, b)]));
                }
            }
            rows.push(row);
        }
        let (Some(anchor), true) = (&p.anchor, p.epsilon.is_finite()) else {
            return Ok(rows);
        };
        let half = p.epsilon / 2.0;
        for j in 1..=l.k {
            let t = tr.mesh.t(j);
            let (x, u) = tr.node(z, j);
            let dx = x - anchor.state.eval(t);
            let du = u - anchor.control.eval(t);
            let mut row = IneqRow {
                value: dx.norm_squared() + du.norm_squared() - half * half,
                grad: Vec::new(),
                hess: Vec::new(),
            };
            let d = crate::linalg::vcat(&dx, &du);
            for (a, ga) in self.node_map(j).into_iter().enumerate() {
                let ga = ga.unwrap();
                row.grad.push((ga, 2.0 * d[a]));
                row.hess.push((ga, ga, 2.0));
            }
            rows.push(row);
        }
        let h = tr.mesh.h();
        let mut integral = IneqRow {
            value: -half,
            grad: Vec::new(),
            hess: Vec::new(),
        };
        let mut paths: Vec<(&crate::dynamics::Path, bool)> = vec![(&anchor.state, true)];
        if p.mode == MinimizerMode::W12xW12 {
            paths.push((&anchor.control, false));
        }
        for j in 0..l.k {
            let (t0, t1) = (tr.mesh.t(j), tr.mesh.t(j + 1));
            for (path, is_state) in &paths {
                let (a, b, len) = if *is_state {
                    (l.x(j), l.x(j + 1), l.n)
                } else {
                    (l.u(j), l.u(j + 1), l.m)
                };
                let (v0, _) = tr.node(z, j);
                let (v1, _) = tr.node(z, j + 1);
                let (w0, w1) = if *is_state {
                    (v0, v1)
                } else {
                    (tr.node(z, j).1, tr.node(z, j + 1).1)
                };
                let (sq, lin) = slope_mismatch(path, t0, t1, &((w1 - w0) / h));
                integral.value += sq;
                for c in 0..len {
                    let (ia, ib) = (a.map(|s| s + c), b.map(|s| s + c));
                    if let Some(ib) = ib {
                        integral.grad.push((ib, 2.0 * lin[c] / h));
                        integral.hess.push((ib, ib, 2.0 / h));
                    }
                    if let Some(ia) = ia {
                        integral.grad.push((ia, -2.0 * lin[c] / h));
                        integral.hess.push((ia, ia, 2.0 / h));
                    }
                    if let (Some(ia), Some(ib)) = (ia, ib) {
                        integral.hess.push((ia, ib, -2.0 / h));
                        integral.hess.push((ib, ia, -2.0 / h));
                    }
                }
            }
        }
        rows.push(integral);
        Ok(rows)
    }

    fn cost_value(&self, z: &Vector) -> Result<f64> {
        cost_eval(&self.tr.problem, &self.tr.decision_from(z)?)
    }

    fn objective(&self, z: &Vector, with_hessian: bool) -> Result<Objective> {
        let tr = self.tr;
        let l = tr.layout;
        let p = &tr.problem;
        let mesh = tr.mesh;
        let nv = l.len();
        let mut value = 0.0;
        let mut grad = Vector::zeros(nv);
        let mut hess = Matrix::zeros(if with_hessian { nv } else { 0 }, if with_hessian { nv } else { 0 });
        let (n, m) = (l.n, l.m);
        for j in 0..l.k {
            let (xj, uj) = tr.node(z, j);
            let (xn, un) = tr.node(z, j + 1);
            let (v, g) = stage_cost(p, &mesh, j, &xj, &uj, &xn, &un);
            value += v;
            let mut map = self.node_map(j);
            map.extend(self.node_map(j + 1));
            for (a, ga) in map.iter().enumerate() {
                if let Some(ga) = ga {
                    grad[*ga] += g[a];
                }
            }
            if with_hessian {
                let w = Vector::from_iterator(2 * (n + m), xj.iter().chain(&uj).chain(&xn).chain(&un).copied());
                let local = fd_hessian(&w, |w| {
                    let s = |o, len| w.rows(o, len).clone_owned();
                    Ok(stage_cost(p, &mesh, j, &s(0, n), &s(n, m), &s(n + m, n), &s(2 * n + m, m)).1)
                })?;
                scatter(&mut hess, &local, &map);
            }
        }
        let (xk, uk) = tr.node(z, l.k);
        let (v, g) = terminal_cost(p, &mesh, &xk, &uk);
        value += v;
        let map = self.node_map(l.k);
        for (a, ga) in map.iter().enumerate() {
            grad[ga.unwrap()] += g[a];
        }
        if with_hessian {
            let w = crate::linalg::vcat(&xk, &uk);
            let local = fd_hessian(&w, |w| {
                Ok(terminal_cost(p, &mesh, &w.rows(0, n).clone_owned(), &w.rows(n, m).clone_owned()).1)
            })?;
            scatter(&mut hess, &local, &map);
        }
        for (i, row) in self.inequality_rows(z)?.iter().enumerate() {
            let (v, w) = self.al.term(i, row.value);
            value += v;
            if w <= 0.0 {
                continue;
            }
            for &(a, ga) in &row.grad {
                grad[a] += w * ga;
            }
            if with_hessian {
                for &(a, ga) in &row.grad {
                    for &(b, gb) in &row.grad {
                        hess[(a, b)] += self.al.penalty * ga * gb;
                    }
                }
                for &(a, b, hv) in &row.hess {
                    hess[(a, b)] += w * hv;
                }
            }
        }
        Ok(Objective { value, grad, hess })
    }

    fn stage_map(&self, j: usize) -> Vec<Option<usize>> {
        let l = self.tr.layout;
        let mut map = self.node_map(j);
        map.extend((0..l.r).map(|i| Some(l.mu(j) + i)));
        map.extend(self.range(l.x(j + 1), l.n));
        map
    }

    fn constraints(&self, z: &Vector, sigma: f64) -> Result<(Vector, Matrix)> {
        let l = self.tr.layout;
        let rows_per = l.n + l.r;
        let mut c = Vector::zeros(l.constraint_len());
        let mut a = Matrix::zeros(l.constraint_len(), l.len());
        for j in 0..l.k {
            let sc = self.tr.stage_constraint(z, j, sigma)?;
            c.rows_mut(j * rows_per, rows_per).copy_from(&sc.value);
            for (col, g) in self.stage_map(j).iter().enumerate() {
                if let Some(g) = g {
                    for row in 0..rows_per {
                        a[(j * rows_per + row, *g)] = sc.jacobian[(row, col)];
                    }
                }
            }
        }
        Ok((c, a))
    }

    fn constraint_values(&self, z: &Vector, sigma: f64) -> Result<Vector> {
        let l = self.tr.layout;
        let rows_per = l.n + l.r;
        let mut c = Vector::zeros(l.constraint_len());
        for j in 0..l.k {
            c.rows_mut(j * rows_per, rows_per)
                .copy_from(&self.tr.stage_constraint(z, j, sigma)?.value);
        }
        Ok(c)
    }

    /// `Σ y_i ∇²c_i` over the free vector.
    fn constraint_curvature(&self, z: &Vector, y: &Vector, sigma: f64) -> Result<Matrix> {
        let tr = self.tr;
        let l = tr.layout;
        let (n, m, r) = (l.n, l.m, l.r);
        let field = tr.problem.system.effective_field();
        let drift = &tr.problem.system.drift;
        let h = tr.mesh.h();
        let rows_per = n + r;
        let mut total = Matrix::zeros(l.len(), l.len());
        for j in 0..l.k {
            let t = tr.mesh.t(j);
            let (xj, uj) = tr.node(z, j);
            let mu = z.rows(l.mu(j), r).clone_owned();
            let eta = tr.rows.transpose() * &mu;
            let yd = y.rows(j * rows_per, n).clone_owned();
            let yc = y.rows(j * rows_per + n, r).clone_owned();
            let d = n + m + r;
            let mut local = Matrix::zeros(d, d);
            // dynamics: third derivatives of ψ and curvature of f
            let w = crate::linalg::vcat(&xj, &uj);
            let xu = fd_hessian(&w, |w| {
                let (x, u) = (w.rows(0, n).clone_owned(), w.rows(n, m).clone_owned());
                let hs = field.hessian(&x, &u, &eta)?;
                let mut g = hs.columns(0, n) * &yd * h;
                if drift.has_jacobian() {
                    let gx = drift.jacobian(t, &x).transpose() * &yd * h;
                    g.rows_mut(0, n).sub_assign_from(&gx);
                }
                Ok(g)
            })?;
            local.view_mut((0, 0), (n + m, n + m)).add_assign(&xu);
            // dynamics: μ against (x, u)
            let slack = &tr.rhs - &tr.rows * field.value(&xj, &uj)?;
            let jac = field.jac_full(&xj, &uj)?;
            let mut weighted = Vector::zeros(field.s);
            for i in 0..r {
                let ri = tr.rows.row(i).transpose();
                let hi = field.hessian(&xj, &uj, &ri)?;
                let cross = hi.columns(0, n) * &yd * h;
                for a in 0..n + m {
                    local[(a, n + m + i)] += cross[a];
                    local[(n + m + i, a)] += cross[a];
                }
                // smoothed complementarity in (μ_i, b_i), b = rhs − Rψ
                let (a_i, b_i) = (mu[i], slack[i]);
                let rho = (a_i * a_i + b_i * b_i + sigma * sigma).sqrt();
                if rho == 0.0 || yc[i] == 0.0 {
                    continue;
                }
                let (_, _, db) = fischer_burmeister(a_i, b_i, sigma);
                let r3 = rho * rho * rho;
                let (haa, hab, hbb) = (-(b_i * b_i + sigma * sigma) / r3, a_i * b_i / r3, -(a_i * a_i + sigma * sigma) / r3);
                let gb = -(ri.transpose() * &jac).transpose();
                for a in 0..n + m {
                    for b in 0..n + m {
                        local[(a, b)] += yc[i] * hbb * gb[a] * gb[b];
                    }
                    local[(a, n + m + i)] += yc[i] * hab * gb[a];
                    local[(n + m + i, a)] += yc[i] * hab * gb[a];
                }
                local[(n + m + i, n + m + i)] += yc[i] * haa;
                weighted -= ri * (yc[i] * db);
            }
            local
                .view_mut((0, 0), (n + m, n + m))
                .add_assign(&field.hessian(&xj, &uj, &weighted)?);
            let mut map = self.node_map(j);
            map.extend((0..r).map(|i| Some(l.mu(j) + i)));
            scatter(&mut total, &local, &map);
        }
        Ok(total)
    }

    fn update_multipliers(&mut self, z: &Vector) -> Result<f64> {
        let rows = self.inequality_rows(z)?;
        self.al.mult.resize(rows.len(), 0.0);
        let mut viol: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            viol = viol.max(row.value.max(0.0));
            self.al.mult[i] = (self.al.mult[i] + self.al.penalty * row.value).max(0.0);
        }
        Ok(viol)
    }

    fn inequality_violation(&self, z: &Vector) -> Result<f64> {
        Ok(self
            .inequality_rows(z)?
            .iter()
            .fold(0.0f64, |a, r| a.max(r.value.max(0.0))))
    }
}

trait AddAssignView {
    fn add_assign(&mut self, other: &Matrix);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, other: &Matrix) {
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

trait SubAssignFrom {
    fn sub_assign_from(&mut self, other: &Vector);
}

impl SubAssignFrom for nalgebra::DVectorViewMut<'_, f64> {
    fn sub_assign_from(&mut self, other: &Vector) {
        for i in 0..self.len() {
            self[i] -= other[i];
        }
    }
}

/// Outcome of one Newton run at fixed σ and fixed augmented multipliers.
struct StageRun {
    iterations: usize,
    converged: bool,
    stationarity: f64,
    merit_steps: Vec<[f64; 2]>,
}

fn kkt_solve(w: &Matrix, a: &Matrix, delta: f64, rhs_top: &Vector, rhs_bottom: &Vector) -> Option<(Vector, Vector)> {
    let (nv, nc) = (w.nrows(), a.nrows());
    let mut k = Matrix::zeros(nv + nc, nv + nc);
    k.view_mut((0, 0), (nv, nv)).copy_from(w);
    for i in 0..nv {
        k[(i, i)] += delta;
    }
    k.view_mut((nv, 0), (nc, nv)).copy_from(a);
    k.view_mut((0, nv), (nv, nc)).copy_from(&a.transpose());
    for i in 0..nc {
        k[(nv + i, nv + i)] -= 1e-12;
    }
    let rhs = crate::linalg::vcat(rhs_top, rhs_bottom);
    let sol = k.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, nv).clone_owned(), sol.rows(nv, nc).clone_owned()))
}

impl<'a> Solver<'a> {
    fn stationarity(&self, obj: &Objective, a: &Matrix, y: &Vector) -> f64 {
        inf_norm(&(&obj.grad + a.transpose() * y))
    }

    fn newton(&self, z: &mut Vector, y: &mut Vector, sigma: f64, opts: &SmoothedOptions) -> Result<StageRun> {
        let mut merit_steps = Vec::new();
        let mut penalty: f64 = 1.0;
        let mut delta: f64 = 0.0;
        let mut iterations = 0;
        loop {
            let obj = self.objective(z, true)?;
            let (c, a) = self.constraints(z, sigma)?;
            let stat = self.stationarity(&obj, &a, y);
            if stat <= opts.tol && inf_norm(&c) <= opts.tol {
                return Ok(StageRun {
                    iterations,
                    converged: true,
                    stationarity: stat,
                    merit_steps,
                });
            }
            if iterations >= opts.max_iter {
                return Ok(StageRun {
                    iterations,
                    converged: false,
                    stationarity: stat,
                    merit_steps,
                });
            }
            let w = &obj.hess + self.constraint_curvature(z, y, sigma)?;
            let csq = c.norm_squared();
            let mut found = None;
            for _ in 0..MAX_DAMPING_TRIES {
                if let Some((d, y_new)) = kkt_solve(&w, &a, delta, &-&obj.grad, &-&c) {
                    let curv = d.dot(&(&w * &d)) + delta * d.norm_squared();
                    if curv > 1e-12 * d.norm_squared() {
                        // Directional derivative of F + yᵀc + ρ/2‖c‖² along (d, y⁺ − y).
                        let base = obj.grad.dot(&d) + c.dot(&(&y_new - &*y * 2.0));
                        let mut pen = penalty;
                        if csq > 0.0 && base - pen * csq > -0.5 * curv {
                            pen = pen.max(2.0 * (base + 0.5 * curv) / csq);
                        }
                        let slope = base - pen * csq;
                        if slope < 0.0 {
                            found = Some((d, y_new, pen, slope));
                            break;
                        }
                    }
                }
                delta = (delta * 10.0).max(1e-10);
            }
            let Some((d, y_new, pen, slope)) = found else {
                // No descent direction left: the iterate is as stationary as rounding allows.
                return Ok(StageRun {
                    iterations,
                    converged: false,
                    stationarity: stat,
                    merit_steps,
                });
            };
            penalty = pen;
            let dy = &y_new - &*y;
            let merit = |obj_v: f64, c: &Vector, y: &Vector| obj_v + y.dot(c) + 0.5 * penalty * c.norm_squared();
            let m0 = merit(obj.value, &c, y);
            let trial_merit = |zt: &Vector, yt: &Vector| -> Option<f64> {
                let v = self.objective(zt, false).ok()?.value;
                let ct = self.constraint_values(zt, sigma).ok()?;
                let mt = merit(v, &ct, yt);
                mt.is_finite().then_some(mt)
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-12 {
                let zt = &*z + &d * alpha;
                let yt = &*y + &dy * alpha;
                if let Some(mt) = trial_merit(&zt, &yt) {
                    if mt <= m0 + ARMIJO * alpha * slope {
                        accepted = Some((zt, yt, mt));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((z_new, y_next, m_new)) = accepted else {
                return Err(SweepError::Numerical(format!(
                    "line search failed at sigma={sigma:.1e} after {iterations} steps (merit {m0:.6e}, slope {slope:.3e}, stationarity {stat:.3e})"
                )));
            };
            let ratio = (m0 - m_new) / (-alpha * slope);
            if ratio > 0.25 && alpha == 1.0 {
                delta = if delta <= 1e-10 { 0.0 } else { delta / 4.0 };
            } else if ratio < 0.25 || alpha < 0.1 {
                delta = (delta * 4.0).max(1e-10);
            }
            *y = y_next;
            *z = z_new;
            merit_steps.push([m0, m_new]);
            iterations += 1;
        }
    }
}

/// Smoothed-complementarity continuation from a feasible warm start.
pub fn solve_smoothed(tr: &Transcription, warm: &DiscreteDecision, opts: &SmoothedOptions) -> Result<Solution> {
    opts.validate()?;
    let l = tr.layout;
    if warm.x.mesh != tr.mesh || warm.u.mesh != tr.mesh {
        return Err(SweepError::Precondition("warm start is not on the transcription mesh".into()));
    }
    let p = &tr.problem;
    if (warm.x.node(0) - &p.system.x0).amax() > WARM_START_TOL
        || (warm.u.node(0) - &p.initial_control).amax() > WARM_START_TOL
    {
        return Err(SweepError::Precondition("warm start does not match the initial data".into()));
    }
    let mut z = tr.pack(warm)?;
    let node_viol = tr.node_violation(&z)?;
    if !tr.initial_feasible()? || node_viol > WARM_START_TOL {
        return Err(SweepError::Precondition(format!(
            "warm start leaves the constraint set (violation {node_viol:.3e})"
        )));
    }
    if localization_violation(p, warm) > WARM_START_TOL {
        return Err(SweepError::Precondition("warm start violates the localization constraints".into()));
    }
    let mut solver = Solver {
        tr,
        al: Augmented {
            mult: Vec::new(),
            penalty: 10.0,
        },
    };
    solver.update_multipliers(&z)?;
    solver.al.mult.iter_mut().for_each(|v| *v = 0.0);
    let mut stages = Vec::new();
    let mut cost_trace = Vec::new();
    let mut iterations = 0;
    let mut last_converged = false;
    let mut last_stat = f64::INFINITY;
    for &sigma in &opts.sigma_schedule {
        let mut y = {
            let obj = solver.objective(&z, false)?;
            let (_, a) = solver.constraints(&z, sigma)?;
            lstsq(&a.transpose(), &-&obj.grad, 1e-12)
        };
        let mut record = StageRecord {
            sigma,
            iterations: 0,
            cost: 0.0,
            stationarity: 0.0,
            complementarity: 0.0,
            merit_steps: Vec::new(),
        };
        let mut prev_viol = f64::INFINITY;
        let mut run_converged = false;
        for _ in 0..MAX_AL_ROUNDS {
            let run = solver.newton(&mut z, &mut y, sigma, opts)?;
            record.iterations += run.iterations;
            record.merit_steps.extend(run.merit_steps);
            record.stationarity = run.stationarity;
            run_converged = run.converged;
            let viol = solver.inequality_violation(&z)?;
            if viol <= 1e-10 {
                break;
            }
            solver.update_multipliers(&z)?;
            if viol > 0.25 * prev_viol {
                solver.al.penalty *= 10.0;
            }
            prev_viol = viol;
        }
        record.cost = solver.cost_value(&z)?;
        record.complementarity = tr.complementarity_residual(&z)?;
        iterations += record.iterations;
        last_converged = run_converged;
        last_stat = record.stationarity;
        cost_trace.push(record.cost);
        stages.push(record);
    }
    let decision = tr.decision_from(&z)?;
    let cost = cost_eval(p, &decision)?;
    let dynamics_residual = tr.dynamics_residual(&z)?;
    let complementarity_residual = tr.complementarity_residual(&z)?;
    let endpoint_violation = tr.endpoint_violation(&z)?;
    let loc = localization_violation(p, &decision);
    let converged = last_converged
        && dynamics_residual <= DYNAMICS_TOL
        && complementarity_residual <= COMPLEMENTARITY_TOL
        && endpoint_violation <= ENDPOINT_TOL
        && loc <= ENDPOINT_TOL;
    let message = if converged {
        "converged".to_string()
    } else if !last_converged {
        format!("final stage stopped at stationarity {last_stat:.3e}")
    } else {
        "returned point violates a tolerance".to_string()
    };
    Ok(Solution {
        decision,
        report: SolveReport {
            solver: SolverKind::Smoothed,
            k: l.k,
            cost,
            stationarity_residual: last_stat,
            complementarity_residual,
            dynamics_residual,
            endpoint_violation,
            localization_violation: loc,
            iterations,
            converged,
            stages,
            cost_trace,
            message,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Drift, Mesh, NodeConvention, Path, StateMap, SweepingSystem};
    use crate::geometry::{FieldMap, ThetaSet};
    use crate::ocp::cost::{Breakpoints, RunningCost, RunningTerm, TerminalCost};
    use crate::ocp::problem::OcpProblem;
    use crate::ocp::transcribe::transcribe;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn halfline() -> OcpProblem {
        let field = FieldMap::linear(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 1.0), v(&[0.0]));
        let sys = SweepingSystem::new(Drift::zero(1), StateMap::Identity, field, ThetaSet::orthant(1), v(&[1.5]), 2.0)
            .unwrap();
        OcpProblem::new(
            sys,
            v(&[-2.0]),
            TerminalCost::Quadratic {
                weight: 1.0,
                target: v(&[1.0]),
            },
            RunningCost::Terms(vec![RunningTerm::ControlTracking {
                weight: 1.0,
                reference: Breakpoints(vec![(0.0, vec![-2.0]), (1.0, vec![-1.0]), (2.0, vec![-1.0])]),
            }]),
            MinimizerMode::W12xW12,
        )
        .unwrap()
    }

    fn frozen(k: usize) -> DiscreteDecision {
        let mesh = Mesh::new(k, 2.0).unwrap();
        DiscreteDecision {
            x: Path::constant(mesh, v(&[1.5])),
            u: Path::constant(mesh, v(&[-2.0])),
            eta: vec![v(&[0.0]); k],
            convention: NodeConvention::Left,
        }
    }

    #[test]
    fn halfline_reaches_zero_cost() {
        let k = 100;
        let tr = transcribe(&halfline(), k).unwrap();
        let sol = solve_smoothed(&tr, &frozen(k), &SmoothedOptions::default()).unwrap();
        let r = &sol.report;
        assert!(r.cost <= 1e-3);
        let worst = (0..k)
            .map(|j| {
                let t = sol.decision.u.mesh.t(j);
                (sol.decision.u.node(j)[0] - if t <= 1.0 { t - 2.0 } else { -1.0 }).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 5e-2, "{worst}");
        assert!(r.converged && r.monotone());
        assert!(r.dynamics_residual <= 1e-6 && r.complementarity_residual <= 1e-6);
    }

    #[test]
    fn optimal_warm_start_takes_no_steps() {
        let k = 20;
        let tr = transcribe(&halfline(), k).unwrap();
        let first = solve_smoothed(&tr, &frozen(k), &SmoothedOptions::default()).unwrap();
        let opts = SmoothedOptions {
            sigma_schedule: vec![1e-8],
            ..Default::default()
        };
        let again = solve_smoothed(&tr, &first.decision, &opts).unwrap();
        assert_eq!(again.report.iterations, 0);
        assert_eq!(again.decision.u, first.decision.u);
    }

    #[test]
    fn infeasible_warm_start_is_rejected() {
        let k = 4;
        let tr = transcribe(&halfline(), k).unwrap();
        let mut warm = frozen(k);
        warm.x = Path::constant(warm.x.mesh, v(&[2.5]));
        assert!(matches!(
            solve_smoothed(&tr, &warm, &SmoothedOptions::default()),
            Err(SweepError::Precondition(_))
        ));
        warm = frozen(k);
        warm.u = Path::from_fn(warm.u.mesh, |t| v(&[if t > 0.0 { 0.0 } else { -2.0 }]));
        assert!(matches!(
            solve_smoothed(&tr, &warm, &SmoothedOptions::default()),
            Err(SweepError::Precondition(_))
        ));
    }

    #[test]
    fn schedule_is_validated() {
        let tr = transcribe(&halfline(), 4).unwrap();
        for bad in [vec![], vec![1e-2], vec![1e-8, 1e-9, 1e-9], vec![-1.0]] {
            let opts = SmoothedOptions {
                sigma_schedule: bad,
                ..Default::default()
            };
            assert!(matches!(solve_smoothed(&tr, &frozen(4), &opts), Err(SweepError::Config(_))));
        }
    }
}

#[cfg(test)]
mod curvature_tests {
    use super::*;
    use crate::dynamics::{Drift, StateMap, SweepingSystem};
    use crate::geometry::{FieldMap, ThetaSet};
    use crate::ocp::cost::{RunningCost, TerminalCost};
    use crate::ocp::problem::OcpProblem;
    use crate::ocp::transcribe::transcribe;

    #[test]
    fn curvature_matches_differences() {
        let v = |x: &[f64]| Vector::from_row_slice(x);
        let sys = SweepingSystem::new(
            Drift::affine(Matrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.0]), v(&[0.0, 0.1])),
            StateMap::Identity,
            FieldMap::polyhedral(2, 2),
            ThetaSet::boxed(v(&[-1.0, f64::NEG_INFINITY]), v(&[0.0, 0.5])).unwrap(),
            v(&[0.1, 0.2]),
            1.0,
        )
        .unwrap();
        let p = OcpProblem::new(
            sys,
            v(&[1.0, 0.2, -0.3, 1.0, 0.9, 0.4]),
            TerminalCost::Zero,
            RunningCost::Terms(vec![]),
            MinimizerMode::W12xW12,
        )
        .unwrap();
        let tr = transcribe(&p, 3).unwrap();
        let solver = Solver {
            tr: &tr,
            al: Augmented {
                mult: vec![],
                penalty: 1.0,
            },
        };
        let l = tr.layout;
        let z = Vector::from_fn(l.len(), |i, _| ((i * 7 % 11) as f64) * 0.1 - 0.4);
        let y = Vector::from_fn(l.constraint_len(), |i, _| ((i * 5 % 7) as f64) * 0.3 - 0.8);
        let sigma = 0.3;
        let hc = solver.constraint_curvature(&z, &y, sigma).unwrap();
        let fd = fd_hessian(&z, |z| Ok(solver.constraints(z, sigma)?.1.transpose() * &y)).unwrap();
        let err = (&hc - &fd).amax();
        assert!(err < 1e-6, "{err}\n{hc}\n{fd}");
    }
}
