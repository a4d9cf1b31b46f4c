use crate::dynamics::{NodeConvention, Path};
use crate::error::Result;
use crate::geometry::{coderivative_distance, distance_to_cone, normal_cone_generators};
use crate::linalg::vcat;
use crate::ocp::problem::{stage_cost, terminal_cost};
use crate::ocp::{DiscreteDecision, MinimizerMode, OcpProblem, RunningGrad};
use crate::Vector;

use super::certificate::{q_from_measure, strictly_interior, subgradient_selections, Certificate, DiscreteCertificate};
use super::eta::{anchor_node, check_pair, frame, recover_eta_with};
use super::hamiltonian::{control_velocity_gradient, conventional_hamiltonian, costate_direction, max_condition_any};
use super::nondegeneracy::{check_nondegeneracy, Nondegeneracy};
use super::report::{HamiltonianValue, ResidualItem, ResidualReport};
use super::{TOL_POS, TOL_RESIDUAL};

/// Stage gradient in `(x_j, u_j)` and `(x_{j+1}, u_{j+1})` built from a
/// given selection of `∇ℓ`, plus whatever the proximity terms add.
fn stage_gradients(problem: &OcpProblem, z: &DiscreteDecision, j: usize, sel: &RunningGrad, own: &RunningGrad) -> (Vector, Vector) {
    let (n, m) = (problem.n(), problem.m());
    let mesh = z.x.mesh;
    let h = mesh.h();
    let (_, g) = stage_cost(problem, &mesh, j, z.x.node(j), z.u.node(j), z.x.node(j + 1), z.u.node(j + 1));
    let mut g0 = g.rows(0, n + m).clone_owned();
    let mut g1 = g.rows(n + m, n + m).clone_owned();
    // Swap the built-in gradient of ℓ for the supplied selection.
    let split = |r: &RunningGrad| {
        let vu = match problem.mode {
            MinimizerMode::W12xW12 => r.vu.clone(),
            MinimizerMode::W12xC => Vector::zeros(m),
        };
        (vcat(&(&r.wx * h - &r.vx), &(&r.wu * h - &vu)), vcat(&r.vx, &vu))
    };
    let (a0, a1) = split(sel);
    let (b0, b1) = split(own);
    g0 += a0 - b0;
    g1 += a1 - b1;
    (g0, g1)
}

fn eta_for(problem: &OcpProblem, z: &DiscreteDecision) -> Option<Vec<Vector>> {
    match z.convention {
        NodeConvention::Left if z.eta.len() == z.k() => Some(z.eta.clone()),
        _ => recover_eta_with(&problem.system, &z.x, &z.u, NodeConvention::Left, 1e-8).ok(),
    }
}

/// Residuals of the discrete Euler–Lagrange system for the explicit scheme
/// `x_{j+1} = x_j + h(f(t_j,x_j) − ∇ₓψ(x_j,u_j)ᵀη_j)`:
///
/// - `euler`: `p_{j+1} − p_j = λ(∇_{j}c_j + ∇_{j+1}c_j) + h(∇²⟨η_j,ψ⟩ − ∇f)ᵀU_j + h∇ψᵀγ_j`
///   with `U_j = p^x_{j+1} − λ∇_{x_{j+1}}c_j` and `c_j` the stage cost;
/// - `psiu`: `p^u_{j+1} = λ∇_{u_{j+1}}c_j` (zero in the `w12c` mode);
/// - `transversality`: `−p_k − λ∇(terminal) ∈ ∇ψᵀN_Θ(ψ(x_k,u_k))`;
/// - `measured_coderivative`: `γ_j ∈ D*N_Θ(ψ_j, η_j)(∇ₓψ U_j)`;
/// - `nontriviality_margin`: `λ + Σ‖p^x_j‖ + ‖p^u_0‖ (+ ‖p^u_k‖)` is positive.
pub fn residual_discrete_el(problem: &OcpProblem, z: &DiscreteDecision, cert: &DiscreteCertificate) -> ResidualReport {
    let mut report = ResidualReport::default();
    let lam = cert.lambda;
    let (n, m) = (problem.n(), problem.m());
    let k = z.k();
    let h = z.h();
    let shape_ok = check_pair(&problem.system, &z.x, &z.u).is_ok()
        && cert.p.dim() == n + m
        && cert.p.mesh == z.x.mesh
        && cert.gamma.len() == k
        && cert.subgrad.len() == k
        && cert.gamma.iter().all(|g| g.len() == problem.system.s());
    if !shape_ok {
        for name in ["euler", "psiu", "transversality", "measured_coderivative", "eta_representation"] {
            report.insert(name, ResidualItem::new(f64::INFINITY, TOL_RESIDUAL));
        }
        report.insert("nontriviality_margin", ResidualItem::new(f64::INFINITY, 0.0));
        return report;
    }
    let own = subgradient_selections(problem, &z.x, &z.u);
    let eta = eta_for(problem, z);
    let field = problem.system.effective_field();
    let theta = &problem.system.theta;

    let mut euler: f64 = 0.0;
    let mut psiu: f64 = 0.0;
    let mut cod: f64 = 0.0;
    let mut eta_rep: f64 = if eta.is_some() { 0.0 } else { f64::INFINITY };
    for j in 0..k {
        let (g0, g1) = stage_gradients(problem, z, j, &cert.subgrad[j], &own[j]);
        let p0 = cert.p.node(j);
        let p1 = cert.p.node(j + 1);
        let u_dir = p1.rows(0, n) - g1.rows(0, n) * lam;
        psiu = psiu.max((p1.rows(n, m) - g1.rows(n, m) * lam).norm());
        let Some(eta) = &eta else {
            euler = f64::INFINITY;
            cod = f64::INFINITY;
            continue;
        };
        let Ok(f) = frame(&problem.system, &z.x, &z.u, j) else {
            euler = f64::INFINITY;
            continue;
        };
        let rep = (f.jx.transpose() * &eta[j] - (problem.system.drift.value(z.x.mesh.t(j), &f.x) - z.x.slope(j))).norm();
        eta_rep = eta_rep.max(rep);
        let hc = match field.hessian(&f.x, &f.u, &eta[j]) {
            Ok(hess) => hess.columns(0, n).clone_owned(),
            Err(_) => {
                euler = f64::INFINITY;
                continue;
            }
        };
        let mut rhs = (&g0 + &g1) * lam + &hc * &u_dir * h + f.jfull.transpose() * &cert.gamma[j] * h;
        let df = problem.system.drift.jacobian(z.x.mesh.t(j), &f.x);
        let mut top = rhs.rows_mut(0, n);
        top -= df.transpose() * &u_dir * h;
        euler = euler.max((p1 - p0 - rhs).norm());
        let d = coderivative_distance(theta, &f.z, &eta[j], &(&f.jx * &u_dir), &cert.gamma[j], TOL_POS)
            .unwrap_or(f64::INFINITY);
        cod = cod.max(d);
    }
    report.insert("euler", ResidualItem::new(euler, TOL_RESIDUAL));
    report.insert("psiu", ResidualItem::new(psiu, TOL_RESIDUAL));
    report.insert("measured_coderivative", ResidualItem::new(cod, TOL_RESIDUAL));
    report.insert("eta_representation", ResidualItem::new(eta_rep, TOL_RESIDUAL));

    let mesh = z.x.mesh;
    let (_, gterm) = terminal_cost(problem, &mesh, z.x.node(k), z.u.node(k));
    report.insert(
        "transversality",
        ResidualItem::new(
            endpoint_distance(problem, &z.x, &z.u, &(-cert.p.node(k) - gterm * lam)),
            TOL_RESIDUAL,
        ),
    );

    let mut margin = lam + cert.p.values.iter().map(|p| p.rows(0, n).norm()).sum::<f64>() + cert.p.node(0).rows(n, m).norm();
    if problem.mode == MinimizerMode::W12xW12 {
        margin += cert.p.node(k).rows(n, m).norm();
    }
    report.insert("nontriviality_margin", nontriviality(margin));
    report.insert("lambda_sign", ResidualItem::new((-lam).max(0.0), 0.0));
    report
}

fn nontriviality(margin: f64) -> ResidualItem {
    ResidualItem::new((TOL_POS - margin).max(0.0), 0.0).with_value(margin)
}

/// Distance from `r` to `∇ψ(x_k,u_k)ᵀN_Θ(ψ(x_k,u_k))`.
fn endpoint_distance(problem: &OcpProblem, x: &Path, u: &Path, r: &Vector) -> f64 {
    let k = x.mesh.k;
    let Ok(f) = frame(&problem.system, x, u, k) else {
        return f64::INFINITY;
    };
    let gens = normal_cone_generators(&problem.system.theta, &f.z, TOL_POS) * &f.jfull;
    distance_to_cone(&gens, r).map(|(d, _)| d).unwrap_or(f64::INFINITY)
}

/// Mesh-sampled residuals of the continuous-time conditions:
///
/// - `adjoint_ode`: `∫‖ṗ − λw − (∇²⟨η,ψ⟩ − ∇f)ᵀ(q^x − λv^x)‖`, in increments;
/// - `q_u`: `sup ‖q^u − λv^u‖`;
/// - `q_measure`: `q = p − ∫_{[t,T]} ∇ψᵀdγ` at the nodes;
/// - `transversality`: `−p(T) − λ(∇φ, 0) ∈ ∇ψᵀN_Θ(ψ(x(T),u(T)))`;
/// - `nontriviality_margin`: `λ + sup‖p‖ + ‖γ‖` is positive;
/// - `nonatomicity`: mass of `γ` where `ψ` is strictly inside Θ;
/// - `measured_coderivative`, `max_condition`: see [`super::max_condition_check`];
/// - `nondegeneracy`: the endpoint admits no nonzero `θ`;
/// - `eta_consistency`: `η` agrees with its recovery from the primal pair.
pub fn residual_continuous_el(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate) -> ResidualReport {
    let mut report = ResidualReport::default();
    let names = [
        "adjoint_ode",
        "q_u",
        "q_measure",
        "transversality",
        "nonatomicity",
        "measured_coderivative",
        "max_condition",
        "nondegeneracy",
        "eta_consistency",
    ];
    if check_pair(&problem.system, x, u).is_err() || cert.check_shape(problem, x).is_err() {
        for name in names {
            report.insert(name, ResidualItem::new(f64::INFINITY, TOL_RESIDUAL));
        }
        report.insert("nontriviality_margin", ResidualItem::new(f64::INFINITY, 0.0));
        return report;
    }
    let (n, m) = (problem.n(), problem.m());
    let mesh = x.mesh;
    let (k, h) = (mesh.k, mesh.h());
    let lam = cert.lambda;
    let field = problem.system.effective_field();
    let theta = &problem.system.theta;

    let mut adjoint = 0.0;
    let mut q_u: f64 = 0.0;
    let mut sup_h = HamiltonianValue::Finite(0.0);
    for j in 0..k {
        let node = anchor_node(cert.convention, j);
        let Ok(f) = frame(&problem.system, x, u, node) else {
            adjoint = f64::INFINITY;
            continue;
        };
        let pv = costate_direction(problem, cert, j);
        q_u = q_u.max((cert.q.node(j + 1).rows(n, m) - control_velocity_gradient(problem, cert, j) * lam).norm());
        match conventional_hamiltonian(field, theta, &f.x, &f.u, &pv) {
            Ok(v) => sup_h = sup_h.max(v),
            Err(_) => sup_h = HamiltonianValue::PlusInfinity,
        }
        let Ok(hess) = field.hessian(&f.x, &f.u, &cert.eta[j]) else {
            adjoint = f64::INFINITY;
            continue;
        };
        let sg = &cert.subgrad[j];
        let mut rate = vcat(&sg.wx, &sg.wu) * lam + hess.columns(0, n) * &pv;
        let df = problem.system.drift.jacobian(mesh.t(node), &f.x);
        let mut top = rate.rows_mut(0, n);
        top -= df.transpose() * &pv;
        adjoint += (cert.p.node(j + 1) - cert.p.node(j) - rate * h).norm();
    }
    report.insert("adjoint_ode", ResidualItem::new(adjoint, TOL_RESIDUAL));
    report.insert("q_u", ResidualItem::new(q_u, TOL_RESIDUAL));
    report.conventional_hamiltonian = Some(sup_h);

    let q_err = match q_from_measure(problem, x, u, &cert.p, &cert.gamma, cert.convention) {
        Ok(q) => (0..=k).map(|j| (q.node(j) - cert.q.node(j)).norm()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    report.insert("q_measure", ResidualItem::new(q_err, TOL_RESIDUAL));

    let (_, grad_phi) = problem.terminal.eval(x.node(k));
    let target = -cert.p.node(k) - vcat(&grad_phi, &Vector::zeros(m)) * lam;
    report.insert("transversality", ResidualItem::new(endpoint_distance(problem, x, u, &target), TOL_RESIDUAL));

    let sup_p = cert.p.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    report.insert("nontriviality_margin", nontriviality(lam + sup_p + cert.gamma.total_variation(h)));
    report.insert("lambda_sign", ResidualItem::new((-lam).max(0.0), 0.0));
    report.insert("nonatomicity", ResidualItem::new(nonatomic_mass(problem, x, u, cert), TOL_RESIDUAL));

    match max_condition_any(problem, x, u, cert) {
        Ok(mc) => {
            report.insert("max_condition", mc.max_condition);
            report.insert("measured_coderivative", mc.measured_coderivative);
        }
        Err(_) => {
            report.insert("max_condition", ResidualItem::new(f64::INFINITY, TOL_RESIDUAL));
            report.insert("measured_coderivative", ResidualItem::new(f64::INFINITY, TOL_RESIDUAL));
        }
    }

    let nondeg = cert
        .eta
        .last()
        .ok_or(())
        .and_then(|eta_t| check_nondegeneracy(field, theta, x.node(k), u.node(k), eta_t).map_err(|_| ()));
    let nd = match nondeg {
        Ok(Nondegeneracy::Nondegenerate) => 0.0,
        Ok(Nondegeneracy::Degenerate { witness }) => witness.norm().max(f64::MIN_POSITIVE),
        Err(()) => f64::INFINITY,
    };
    report.insert("nondegeneracy", ResidualItem::new(nd, TOL_RESIDUAL));

    let eta_err = match recover_eta_with(&problem.system, x, u, cert.convention, 1e-8) {
        Ok(rec) => rec.iter().zip(&cert.eta).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    report.insert("eta_consistency", ResidualItem::new(eta_err, TOL_RESIDUAL));
    report
}

/// Mass of `γ` on intervals whose end nodes are both strictly interior and
/// at strictly interior nodes before `T`.
fn nonatomic_mass(problem: &OcpProblem, x: &Path, u: &Path, cert: &Certificate) -> f64 {
    let mesh = x.mesh;
    let (k, h) = (mesh.k, mesh.h());
    let Ok(interior) = (0..=k).map(|j| strictly_interior(problem, x, u, j)).collect::<Result<Vec<bool>>>() else {
        return f64::INFINITY;
    };
    let Ok(atoms) = cert.gamma.node_atoms(&mesh) else {
        return f64::INFINITY;
    };
    let dens: f64 = (0..k).filter(|&j| interior[j] && interior[j + 1]).map(|j| h * cert.gamma.density[j].norm()).sum();
    let at: f64 = (0..k).filter(|&j| interior[j]).map(|j| atoms[j].norm()).sum();
    dens + at
}

