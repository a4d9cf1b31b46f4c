use serde::{Deserialize, Serialize};

use crate::dynamics::Path;
use crate::error::{Result, SweepError};
use crate::geometry::cone::active_rows;
use crate::geometry::{coderivative_distance, surjectivity_check_relative, FieldMap, SmoothInequality, ThetaSet, TOL_FEAS};
use crate::linalg::{lstsq, rank, select_rows};
use crate::ocp::{MinimizerMode, OcpProblem};
use crate::{Matrix, Vector};

use super::certificate::Certificate;
use super::eta::{anchor_node, check_pair, frame};
use super::report::{HamiltonianValue, ResidualItem};
use super::{TOL_POS, TOL_RESIDUAL};

/// Sign band for the Hamiltonian coefficients.
const SIGN_TOL: f64 = 1e-10;

fn require_member(theta: &ThetaSet, z: &Vector) -> Result<()> {
    if theta.contains(z, TOL_FEAS) {
        Ok(())
    } else {
        Err(SweepError::Precondition(format!("ψ(x,u) = {:?} is not in Θ", z.as_slice())))
    }
}

/// `H_ν(x,u,p)` for `Θ = R^s_-`: the supremum over `α_i ≤ 0` of
/// `Σ_{i active} α_i ν_i ⟨[∇ₓψ]_i, p⟩`, which is `0` when every coefficient
/// is nonnegative and `+∞` otherwise.
pub fn modified_hamiltonian(
    field: &FieldMap,
    theta: &ThetaSet,
    x: &Vector,
    u: &Vector,
    p: &Vector,
    nu: &Vector,
) -> Result<HamiltonianValue> {
    if !theta.is_orthant() {
        return Err(SweepError::Config("the modified Hamiltonian is defined for the nonpositive orthant".into()));
    }
    crate::error::check_dim("ν dimension", field.s, nu.len())?;
    let z = field.value(x, u)?;
    require_member(theta, &z)?;
    let jx = field.jac_x(x, u)?;
    let coef = &jx * p;
    let unbounded = (0..z.len()).any(|i| z[i] >= -TOL_FEAS && nu[i] * coef[i] < 0.0);
    Ok(if unbounded { HamiltonianValue::PlusInfinity } else { HamiltonianValue::Finite(0.0) })
}

/// `H(x,p) = sup{⟨p,v⟩ | v ∈ −N(x; C(u))}`, i.e. the supremum of
/// `⟨p, −∇ₓψᵀη⟩` over `η ∈ N_Θ(ψ(x,u))`: `0` or `+∞`.
pub fn conventional_hamiltonian(
    field: &FieldMap,
    theta: &ThetaSet,
    x: &Vector,
    u: &Vector,
    p: &Vector,
) -> Result<HamiltonianValue> {
    let z = field.value(x, u)?;
    require_member(theta, &z)?;
    let jx = field.jac_x(x, u)?;
    let gens = crate::geometry::normal_cone_generators(theta, &z, TOL_FEAS) * &jx;
    let slopes = -(&gens * p);
    Ok(if slopes.iter().any(|&c| c > 0.0) { HamiltonianValue::PlusInfinity } else { HamiltonianValue::Finite(0.0) })
}

pub(crate) fn require_surjective(jac: &Matrix) -> Result<()> {
    if surjectivity_check_relative(jac).is_ok() {
        return Ok(());
    }
    let sigma_min = if jac.nrows() > jac.ncols() {
        0.0
    } else {
        crate::linalg::singular_values(jac).last().copied().unwrap_or(0.0)
    };
    Err(SweepError::Surjectivity { sigma_min })
}

/// Multipliers of `Θ = {h ≤ 0}` at `z`: `μ` with `η = ∇h(z)ᵀμ` and `ν` with
/// `ν̃ = ∇²⟨μ,h⟩(z)·dir + ∇h(z)ᵀν`. Needs `∇h(z)` surjective.
pub fn lift_multipliers(
    set: &SmoothInequality,
    z: &Vector,
    eta: &Vector,
    dir: &Vector,
    nu_tilde: &Vector,
) -> Result<(Vector, Vector)> {
    let jac = (set.jacobian)(z);
    require_surjective(&jac)?;
    let mu = lstsq(&jac.transpose(), eta, 1e-12);
    let target = nu_tilde - (set.hessian)(z, &mu) * dir;
    let nu = lstsq(&jac.transpose(), &target, 1e-12);
    Ok((mu, nu))
}

/// Active constraint rows at one node in orthant coordinates.
struct Lifted {
    /// Rows `∇G_i(ψ)·∇ₓψ` of the active constraints.
    grads: Matrix,
    mu: Vector,
    nu: Vector,
}

/// Lift through the active rows of Θ; the orthant is its own lift.
fn lift(theta: &ThetaSet, z: &Vector, jx: &Matrix, eta: &Vector, dir: &Vector, nu_tilde: &Vector) -> Result<Lifted> {
    let (act, g, jg) = active_rows(theta, z, TOL_POS);
    if theta.is_orthant() {
        return Ok(Lifted {
            grads: select_rows(jx, &act),
            mu: crate::linalg::select(eta, &act),
            nu: crate::linalg::select(nu_tilde, &act),
        });
    }
    let ga = select_rows(&jg, &act);
    if rank(&ga, 1e-10) < act.len() {
        return Err(SweepError::Config(
            "active constraint rows of Θ are linearly dependent; only the independent case is supported".into(),
        ));
    }
    let mu = lstsq(&ga.transpose(), eta, 1e-12);
    let mut mu_full = Vector::zeros(g.len());
    for (c, &i) in act.iter().enumerate() {
        mu_full[i] = mu[c];
    }
    let target = nu_tilde - theta.row_hessian(z, &mu_full) * dir;
    let nu = lstsq(&ga.transpose(), &target, 1e-12);
    Ok(Lifted {
        grads: &ga * jx,
        mu,
        nu,
    })
}

/// Maximum-condition data on one interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalCheck {
    pub t: f64,
    /// `⟨[ν, ẋ], q^x − λv^x⟩`.
    pub lhs: f64,
    /// `H_ν(x, u, q^x − λv^x)`.
    pub hamiltonian: HamiltonianValue,
    /// Largest `|⟨q^x − λv^x, [∇ₓψ]_i⟩|` over rows with `η_i > tol_pos`.
    pub implication: f64,
    /// Distance of `ν` from the coderivative set; `+∞` if that set is empty.
    #[serde(skip)]
    pub coderivative: f64,
}

impl IntervalCheck {
    pub fn residual(&self) -> f64 {
        if self.hamiltonian.is_infinite() {
            return f64::INFINITY;
        }
        let h = match self.hamiltonian {
            HamiltonianValue::Finite(v) => v.abs(),
            HamiltonianValue::PlusInfinity => f64::INFINITY,
        };
        self.lhs.abs().max(self.implication).max(h)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxConditionReport {
    pub intervals: Vec<IntervalCheck>,
    pub max_condition: ResidualItem,
    pub measured_coderivative: ResidualItem,
}

/// `q^x − λv^x` on interval `j`.
pub(crate) fn costate_direction(problem: &OcpProblem, cert: &Certificate, j: usize) -> Vector {
    let n = problem.n();
    cert.q.node(j + 1).rows(0, n) - &cert.subgrad[j].vx * cert.lambda
}

fn interval_check(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate, j: usize) -> Result<IntervalCheck> {
    let theta = &problem.system.theta;
    let f = frame(&problem.system, x, u, anchor_node(cert.convention, j))?;
    let pv = costate_direction(problem, cert, j);
    let dir = &f.jx * &pv;
    let coderivative =
        coderivative_distance(theta, &f.z, &cert.eta[j], &dir, &cert.nu[j], TOL_POS).unwrap_or(f64::INFINITY);
    let l = lift(theta, &f.z, &f.jx, &cert.eta[j], &dir, &cert.nu[j])?;
    Ok(check_lifted(x.mesh.t(j), &l, &pv, coderivative))
}

fn check_lifted(t: f64, l: &Lifted, pv: &Vector, coderivative: f64) -> IntervalCheck {
    let c = &l.grads * pv;
    let mut lhs = 0.0;
    let mut implication: f64 = 0.0;
    let mut unbounded = false;
    for i in 0..c.len() {
        // ẋ = Σ α_i [∇ₓψ]_i with α_i = −μ_i.
        lhs += l.nu[i] * (-l.mu[i]) * c[i];
        if l.nu[i] * c[i] < -SIGN_TOL {
            unbounded = true;
        }
        if l.mu[i] > TOL_POS {
            implication = implication.max(c[i].abs());
        }
    }
    IntervalCheck {
        t,
        lhs,
        hamiltonian: if unbounded { HamiltonianValue::PlusInfinity } else { HamiltonianValue::Finite(0.0) },
        implication,
        coderivative,
    }
}

fn summarize(intervals: Vec<IntervalCheck>) -> MaxConditionReport {
    let worst = intervals.iter().map(IntervalCheck::residual).fold(0.0, f64::max);
    let cod = intervals.iter().map(|c| c.coderivative).fold(0.0, f64::max);
    MaxConditionReport {
        intervals,
        max_condition: ResidualItem::new(worst, TOL_RESIDUAL),
        measured_coderivative: ResidualItem::new(cod, TOL_RESIDUAL),
    }
}

/// Both equalities of the maximum condition on every interval, the
/// implication `η_i > 0 ⇒ ⟨λv^x − q^x, [∇ₓψ]_i⟩ = 0`, and membership of `ν`
/// in the coderivative of the normal-cone map.
pub fn max_condition_check(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate) -> Result<MaxConditionReport> {
    if !problem.system.theta.is_orthant() {
        return Err(SweepError::Config(
            "the maximum condition is stated for the nonpositive orthant; use smooth_inequality_lift".into(),
        ));
    }
    max_condition_any(problem, x, u, cert)
}

/// [`max_condition_check`] through the active rows of any supported Θ.
pub(crate) fn max_condition_any(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate) -> Result<MaxConditionReport> {
    check_pair(&problem.system, x, u)?;
    cert.check_shape(problem, x)?;
    let intervals = (0..x.mesh.k).map(|j| interval_check(problem, x, u, cert, j)).collect::<Result<Vec<_>>>()?;
    Ok(summarize(intervals))
}

/// Recovered multipliers of `Θ = {h ≤ 0}` and the maximum condition in the
/// lifted coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftReport {
    pub mu: Vec<Vector>,
    pub nu: Vec<Vector>,
    pub max_condition: MaxConditionReport,
}

/// Resolves `μ` from `η` and `ν` from `ν̃ = cert.nu` on every interval, then
/// checks the maximum condition with `h∘ψ` against `R^l_-`.
pub fn smooth_inequality_lift(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate) -> Result<LiftReport> {
    let ThetaSet::SmoothInequality(set) = &problem.system.theta else {
        return Err(SweepError::Config("the lift needs Θ given by smooth inequalities".into()));
    };
    check_pair(&problem.system, x, u)?;
    cert.check_shape(problem, x)?;
    let mut mus = Vec::with_capacity(x.mesh.k);
    let mut nus = Vec::with_capacity(x.mesh.k);
    let mut intervals = Vec::with_capacity(x.mesh.k);
    for j in 0..x.mesh.k {
        let f = frame(&problem.system, x, u, anchor_node(cert.convention, j))?;
        let pv = costate_direction(problem, cert, j);
        let dir = &f.jx * &pv;
        let (mu, nu) = lift_multipliers(set, &f.z, &cert.eta[j], &dir, &cert.nu[j])?;
        let hv = (set.value)(&f.z);
        let act: Vec<usize> = (0..hv.len()).filter(|&i| hv[i] >= -TOL_POS).collect();
        let jh = (set.jacobian)(&f.z);
        let hdir = &jh * &dir;
        let cod = match crate::geometry::coderivative_orthant_tol(&hv.map(|v| v.min(0.0)), &mu.map(|v| v.max(0.0)), &hdir, TOL_POS) {
            Ok(Some(cls)) => cls.iter().zip(nu.iter()).map(|(c, &o)| c.distance(o)).sum(),
            _ => f64::INFINITY,
        };
        let l = Lifted {
            grads: select_rows(&jh, &act) * &f.jx,
            mu: crate::linalg::select(&mu, &act),
            nu: crate::linalg::select(&nu, &act),
        };
        intervals.push(check_lifted(x.mesh.t(j), &l, &pv, cod));
        mus.push(mu);
        nus.push(nu);
    }
    Ok(LiftReport {
        mu: mus,
        nu: nus,
        max_condition: summarize(intervals),
    })
}

/// Conventional maximum principle on the intervals where every active
/// multiplier is positive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub checked: usize,
    pub skipped: usize,
    /// Largest `|⟨ẋ, q^x − λv^x⟩| + H` over checked intervals.
    pub residual: ResidualItem,
    /// Largest conventional Hamiltonian over all intervals.
    pub conventional_hamiltonian: HamiltonianValue,
}

/// On intervals where `η_i > tol_pos` for every active row, checks
/// `⟨ẋ, q^x − λv^x⟩ = H(x, u, q^x − λv^x) = 0`; other intervals are skipped.
pub fn conventional_sufficiency_check(
    problem: &OcpProblem,
    x: &Path,
    u: &Path,
    cert: &Certificate,
) -> Result<SufficiencyReport> {
    check_pair(&problem.system, x, u)?;
    cert.check_shape(problem, x)?;
    let field = problem.system.effective_field();
    let theta = &problem.system.theta;
    let (mut checked, mut skipped) = (0, 0);
    let mut worst: f64 = 0.0;
    let mut sup_h = HamiltonianValue::Finite(0.0);
    for j in 0..x.mesh.k {
        let f = frame(&problem.system, x, u, anchor_node(cert.convention, j))?;
        let pv = costate_direction(problem, cert, j);
        let h = conventional_hamiltonian(field, theta, &f.x, &f.u, &pv)?;
        sup_h = sup_h.max(h);
        let l = lift(theta, &f.z, &f.jx, &cert.eta[j], &(&f.jx * &pv), &cert.nu[j])?;
        if l.mu.iter().any(|&m| m <= TOL_POS) {
            skipped += 1;
            continue;
        }
        checked += 1;
        let lhs = x.slope(j).dot(&pv).abs();
        worst = worst.max(match h {
            HamiltonianValue::Finite(v) => lhs + v.abs(),
            HamiltonianValue::PlusInfinity => f64::INFINITY,
        });
    }
    Ok(SufficiencyReport {
        checked,
        skipped,
        residual: ResidualItem::new(worst, TOL_RESIDUAL),
        conventional_hamiltonian: sup_h,
    })
}

/// `v^u` as it enters `q^u = λv^u`; zero in the `w12c` mode.
pub(crate) fn control_velocity_gradient(problem: &OcpProblem, cert: &Certificate, j: usize) -> Vector {
    match problem.mode {
        MinimizerMode::W12xW12 => cert.subgrad[j].vu.clone(),
        MinimizerMode::W12xC => Vector::zeros(problem.m()),
    }
}
